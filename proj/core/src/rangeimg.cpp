#include "flash/rangeimg.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "detail/binary_io.hpp"
#include "flash/checkpoint.hpp"

namespace flash {

double Point3::norm() const { return std::sqrt(x * x + y * y + z * z); }

void ProjectionConfig::validate() const {
    if (height == 0 || width == 0) throw std::invalid_argument("projection: H and W must be positive");
    if (!(theta_max > theta_min)) throw std::invalid_argument("projection: theta_max must exceed theta_min");
    if (!(r_min >= 0.0) || !(r_max > r_min))
        throw std::invalid_argument("projection: require r_max > r_min >= 0");
}

std::size_t RangeImage::valid_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
}

PixelCoord pixel_coord(const Point3& p, const ProjectionConfig& cfg) {
    const double w = static_cast<double>(cfg.width);
    const double h = static_cast<double>(cfg.height);
    const double rho = std::sqrt(p.x * p.x + p.y * p.y);
    PixelCoord c;
    c.u = w / 2.0 - (w / (2.0 * std::numbers::pi)) * std::atan2(p.y, p.x);
    c.v = h * (cfg.theta_max - std::atan2(p.z, rho)) / (cfg.theta_max - cfg.theta_min);
    return c;
}

Point3 cell_ray(std::size_t row, std::size_t col, const ProjectionConfig& cfg) {
    const double w = static_cast<double>(cfg.width);
    const double h = static_cast<double>(cfg.height);
    const double azimuth = (w / 2.0 - (static_cast<double>(col) + 0.5)) * (2.0 * std::numbers::pi / w);
    const double elevation = cfg.theta_max - (static_cast<double>(row) + 0.5) * (cfg.theta_max - cfg.theta_min) / h;
    const double ce = std::cos(elevation);
    return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

ProjectionResult project(const PointCloud& cloud, const ProjectionConfig& cfg) {
    cfg.validate();
    ProjectionResult out{RangeImage(cfg.height, cfg.width), 0};
    const auto w = static_cast<std::ptrdiff_t>(cfg.width);
    for (const auto& p : cloud.points) {
        const double r = p.norm();
        const PixelCoord c = pixel_coord(p, cfg);
        const double vf = std::floor(c.v);
        if (!(r >= cfg.r_min && r <= cfg.r_max) || !(vf >= 0.0 && vf < static_cast<double>(cfg.height))) {
            ++out.dropped;
            continue;
        }
        auto u = static_cast<std::ptrdiff_t>(std::floor(c.u));
        u = ((u % w) + w) % w;
        const auto row = static_cast<std::size_t>(vf);
        const auto col = static_cast<std::size_t>(u);
        const float rf = static_cast<float>(r);
        if (!out.image.valid(row, col) || rf < out.image.at(row, col)) out.image.set(row, col, rf);
    }
    return out;
}

PointCloud unproject(const RangeImage& img, const ProjectionConfig& cfg) {
    cfg.validate();
    if (img.height != cfg.height || img.width != cfg.width)
        throw std::invalid_argument("unproject: image is " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + ", config expects " + std::to_string(cfg.height) +
                                    "x" + std::to_string(cfg.width));
    PointCloud cloud;
    cloud.points.reserve(img.valid_count());
    for (std::size_t v = 0; v < img.height; ++v)
        for (std::size_t u = 0; u < img.width; ++u) {
            if (!img.valid(v, u)) continue;
            const Point3 d = cell_ray(v, u, cfg);
            const double r = img.at(v, u);
            cloud.points.push_back({d.x * r, d.y * r, d.z * r});
        }
    return cloud;
}

RangeImage log_transform(const RangeImage& img) {
    RangeImage out = img;
    for (std::size_t i = 0; i < img.range.size(); ++i) {
        if (!img.mask[i]) continue;
        if (img.range[i] < 0.0f) throw std::invalid_argument("log_transform: negative range in valid cell (corrupt input)");
        out.range[i] = static_cast<float>(std::log1p(static_cast<double>(img.range[i])));
    }
    return out;
}

RangeImage inverse_log_transform(const RangeImage& img) {
    RangeImage out = img;
    for (std::size_t i = 0; i < img.range.size(); ++i)
        if (img.mask[i]) out.range[i] = static_cast<float>(std::expm1(static_cast<double>(img.range[i])));
    return out;
}

RangeImage downsample_rows(const RangeImage& img, std::size_t factor) {
    if (factor == 0 || img.height % factor != 0)
        throw std::invalid_argument("downsample_rows: height " + std::to_string(img.height) +
                                    " not divisible by factor " + std::to_string(factor));
    RangeImage out(img.height / factor, img.width);
    for (std::size_t r = 0; r < out.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) {
            out.range[r * img.width + c] = img.range[r * factor * img.width + c];
            out.mask[r * img.width + c] = img.mask[r * factor * img.width + c];
        }
    return out;
}

PointCloud read_velodyne_bin(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    const auto bytes = std::filesystem::file_size(path);
    if (bytes % 16 != 0)
        throw std::runtime_error("velodyne file " + path.string() + " has " + std::to_string(bytes) +
                                 " bytes, not a multiple of the 16-byte record");
    PointCloud cloud;
    cloud.points.reserve(bytes / 16);
    for (std::uintmax_t i = 0; i < bytes / 16; ++i) {
        const float x = detail::read_le<float>(is, "velodyne record");
        const float y = detail::read_le<float>(is, "velodyne record");
        const float z = detail::read_le<float>(is, "velodyne record");
        detail::read_le<float>(is, "velodyne record");  // intensity
        cloud.points.push_back({x, y, z});
    }
    return cloud;
}

void write_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ostringstream os(std::ios::binary);
    for (const auto& p : cloud.points) {
        detail::write_le<float>(os, static_cast<float>(p.x));
        detail::write_le<float>(os, static_cast<float>(p.y));
        detail::write_le<float>(os, static_cast<float>(p.z));
        detail::write_le<float>(os, 0.0f);
    }
    atomic_write(path, os.str());
}

namespace {
constexpr char kFrimMagic[4] = {'F', 'R', 'I', 'M'};
constexpr std::uint16_t kFrimVersion = 1;
}  // namespace

RangeImage read_rangeimage(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kFrimMagic, 4))
        throw std::runtime_error("bad magic in range image " + path.string());
    const auto version = detail::read_le<std::uint16_t>(is, "FRIM version");
    if (version != kFrimVersion) throw std::runtime_error("unsupported FRIM version " + std::to_string(version));
    const auto h = detail::read_le<std::uint32_t>(is, "FRIM height");
    const auto w = detail::read_le<std::uint32_t>(is, "FRIM width");
    const std::uintmax_t expected = 14 + std::uintmax_t{h} * w * 5;
    const auto actual = std::filesystem::file_size(path);
    if (actual != expected)
        throw std::runtime_error("FRIM dimension mismatch: header says " + std::to_string(h) + "x" +
                                 std::to_string(w) + " (" + std::to_string(expected) + " bytes), file has " +
                                 std::to_string(actual));
    RangeImage img(h, w);
    for (auto& r : img.range) r = detail::read_le<float>(is, "FRIM ranges");
    for (auto& m : img.mask) {
        m = detail::read_le<std::uint8_t>(is, "FRIM mask");
        if (m > 1) throw std::runtime_error("FRIM mask byte must be 0 or 1");
    }
    return img;
}

void write_rangeimage(const RangeImage& img, const std::filesystem::path& path) {
    if (img.range.size() != img.height * img.width || img.mask.size() != img.range.size())
        throw std::invalid_argument("write_rangeimage: buffer sizes do not match dimensions");
    std::ostringstream os(std::ios::binary);
    os.write(kFrimMagic, 4);
    detail::write_le<std::uint16_t>(os, kFrimVersion);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.height));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.width));
    for (float r : img.range) detail::write_le<float>(os, r);
    for (auto m : img.mask) detail::write_le<std::uint8_t>(os, m ? 1 : 0);
    atomic_write(path, os.str());
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    os << std::setprecision(9);
    for (const auto& p : cloud.points) os << p.x << ' ' << p.y << ' ' << p.z << '\n';
    atomic_write(path, os.str());
}

PointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw std::runtime_error("bad magic in PLY " + path.string());
    std::size_t count = 0;
    bool ascii = false;
    while (std::getline(is, line)) {
        if (line.rfind("format", 0) == 0) ascii = line.find("ascii") != std::string::npos;
        if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
        if (line == "end_header") break;
    }
    if (!ascii) throw std::runtime_error("only ASCII PLY is supported");
    PointCloud cloud;
    cloud.points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Point3 p;
        if (!(is >> p.x >> p.y >> p.z)) throw std::runtime_error("truncated PLY vertex list");
        std::getline(is, line);  // ignore any extra properties
        cloud.points.push_back(p);
    }
    return cloud;
}

}  // namespace flash
