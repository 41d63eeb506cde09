#include "flash/config_file.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flash {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + text + "'");
    try {
        return std::stoull(text);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("config: " + key + " is out of range");
    }
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(n);
        if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(where + ": empty key");
        if (!kv.values_.emplace(key, value).second) throw std::invalid_argument(where + ": duplicate key '" + key + "'");
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

const std::string* KeyValueConfig::take(const std::string& key) {
    auto it = values_.find(key);
    consumed_.insert(key);
    return it == values_.end() ? nullptr : &it->second;
}

void KeyValueConfig::get(const std::string& key, std::uint64_t& out) {
    if (auto v = take(key)) out = parse_uint(key, *v);
}

void KeyValueConfig::get(const std::string& key, double& out) {
    auto v = take(key);
    if (!v) return;
    std::size_t used = 0;
    try {
        out = std::stod(*v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v->size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + *v + "'");
}

void KeyValueConfig::get(const std::string& key, bool& out) {
    auto v = take(key);
    if (!v) return;
    if (*v == "true" || *v == "1") out = true;
    else if (*v == "false" || *v == "0") out = false;
    else throw std::invalid_argument("config: " + key + " expects true/false, got '" + *v + "'");
}

void KeyValueConfig::get(const std::string& key, std::string& out) {
    if (auto v = take(key)) out = *v;
}

void KeyValueConfig::get(const std::string& key, std::vector<std::size_t>& out) {
    auto v = take(key);
    if (!v) return;
    std::vector<std::size_t> list;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) list.push_back(parse_uint(key, trim(item)));
    if (list.empty()) throw std::invalid_argument("config: " + key + " expects a comma-separated list");
    out = std::move(list);
}

void KeyValueConfig::check_consumed() const {
    std::string unknown;
    for (const auto& [k, v] : values_)
        if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw std::invalid_argument(origin_ + ": unknown keys: " + unknown);
}

void read_model_config(KeyValueConfig& kv, FlashConfig& c) {
    kv.get("model.input_height", c.input_height);
    kv.get("model.width", c.width);
    kv.get("model.embed_dim", c.embed_dim);
    kv.get("model.depths", c.depths);
    kv.get("model.heads", c.heads);
    kv.get("model.window_h", c.window_h);
    kv.get("model.window_w", c.window_w);
    kv.get("model.mlp_ratio", c.mlp_ratio);
    kv.get("model.dropout", c.dropout);
    kv.get("model.enable_fa", c.enable_fa);
    kv.get("model.enable_msf", c.enable_msf);
    kv.get("model.alpha_init", c.alpha_init);
    kv.get("model.cbam_kernel", c.cbam_kernel);
    kv.get("model.cbam_max_reduction", c.cbam_max_reduction);
    kv.get("model.seed", c.seed);
}

void read_train_config(KeyValueConfig& kv, TrainConfig& c) {
    kv.get("train.epochs", c.epochs);
    kv.get("train.batch", c.batch);
    kv.get("train.seed", c.seed);
    kv.get("train.checkpoint_every", c.checkpoint_every);
    kv.get("train.warmup_epochs", c.schedule.warmup_epochs);
    kv.get("train.cycle_length", c.schedule.cycle_length);
    kv.get("train.peak_lr", c.schedule.peak);
    kv.get("train.lr_decay", c.schedule.decay);
    kv.get("train.floor_lr", c.schedule.floor);
    kv.get("train.beta1", c.adamw.beta1);
    kv.get("train.beta2", c.adamw.beta2);
    kv.get("train.eps", c.adamw.eps);
    kv.get("train.weight_decay", c.adamw.weight_decay);
}

void read_synth_config(KeyValueConfig& kv, SynthConfig& c) {
    kv.get("synth.height", c.projection.height);
    kv.get("synth.width", c.projection.width);
    kv.get("synth.downsample", c.downsample);
    kv.get("synth.sensor_height", c.sensor_height);
    kv.get("synth.min_boxes", c.min_boxes);
    kv.get("synth.max_boxes", c.max_boxes);
    kv.get("synth.min_cylinders", c.min_cylinders);
    kv.get("synth.max_cylinders", c.max_cylinders);
    kv.get("synth.min_distance", c.min_distance);
    kv.get("synth.max_distance", c.max_distance);
}

std::string to_kv(const FlashConfig& c) {
    std::string s;
    s += "model.input_height = " + std::to_string(c.input_height) + "\n";
    s += "model.width = " + std::to_string(c.width) + "\n";
    s += "model.embed_dim = " + std::to_string(c.embed_dim) + "\n";
    s += "model.depths = " + join(c.depths) + "\n";
    s += "model.heads = " + join(c.heads) + "\n";
    s += "model.window_h = " + std::to_string(c.window_h) + "\n";
    s += "model.window_w = " + std::to_string(c.window_w) + "\n";
    s += "model.mlp_ratio = " + std::to_string(c.mlp_ratio) + "\n";
    s += "model.dropout = " + real(c.dropout) + "\n";
    s += std::string("model.enable_fa = ") + (c.enable_fa ? "true" : "false") + "\n";
    s += std::string("model.enable_msf = ") + (c.enable_msf ? "true" : "false") + "\n";
    s += "model.alpha_init = " + real(c.alpha_init) + "\n";
    s += "model.cbam_kernel = " + std::to_string(c.cbam_kernel) + "\n";
    s += "model.cbam_max_reduction = " + std::to_string(c.cbam_max_reduction) + "\n";
    s += "model.seed = " + std::to_string(c.seed) + "\n";
    return s;
}

std::string to_kv(const TrainConfig& c) {
    std::string s;
    s += "train.epochs = " + std::to_string(c.epochs) + "\n";
    s += "train.batch = " + std::to_string(c.batch) + "\n";
    s += "train.seed = " + std::to_string(c.seed) + "\n";
    s += "train.checkpoint_every = " + std::to_string(c.checkpoint_every) + "\n";
    s += "train.warmup_epochs = " + real(c.schedule.warmup_epochs) + "\n";
    s += "train.cycle_length = " + real(c.schedule.cycle_length) + "\n";
    s += "train.peak_lr = " + real(c.schedule.peak) + "\n";
    s += "train.lr_decay = " + real(c.schedule.decay) + "\n";
    s += "train.floor_lr = " + real(c.schedule.floor) + "\n";
    s += "train.beta1 = " + real(c.adamw.beta1) + "\n";
    s += "train.beta2 = " + real(c.adamw.beta2) + "\n";
    s += "train.eps = " + real(c.adamw.eps) + "\n";
    s += "train.weight_decay = " + real(c.adamw.weight_decay) + "\n";
    return s;
}

}  // namespace flash
