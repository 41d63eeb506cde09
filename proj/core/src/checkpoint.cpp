#include "flash/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "detail/binary_io.hpp"

namespace flash {

namespace {
constexpr char kMagic[4] = {'F', 'L', 'S', 'H'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const ParameterList& params, const std::filesystem::path& path) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    detail::write_le<std::uint16_t>(os, kVersion);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        for (double v : p.tensor.data()) detail::write_le<double>(os, v);
    }
    atomic_write(path, os.str());
}

ParameterList load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("bad magic in checkpoint " + path.string());
    const auto version = detail::read_le<std::uint16_t>(is, "checkpoint version");
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = detail::read_le<std::uint32_t>(is, "checkpoint count");
    ParameterList out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("truncated checkpoint name");
        const auto rank = detail::read_le<std::uint32_t>(is, "rank");
        Shape shape(rank);
        for (auto& d : shape) d = detail::read_le<std::uint32_t>(is, "dimension");
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = detail::read_le<double>(is, "tensor values");
        out.push_back({std::move(name), Tensor::parameter(std::move(shape), std::move(values))});
    }
    return out;
}

void restore_parameters(ParameterList& params, const std::filesystem::path& path) {
    ParameterList stored = load_checkpoint(path);
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& s : stored) by_name[s.name] = &s.tensor;
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint lacks parameter '" + p.name + "'");
        if (it->second->shape() != p.tensor.shape())
            throw std::runtime_error("checkpoint shape mismatch for '" + p.name + "': " +
                                     shape_str(it->second->shape()) + " vs " + shape_str(p.tensor.shape()));
        auto dst = p.tensor.mutable_data();
        auto src = it->second->data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    if (stored.size() != params.size())
        throw std::runtime_error("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                                 std::to_string(params.size()));
}

}  // namespace flash
