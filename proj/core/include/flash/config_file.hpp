#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "flash/network.hpp"
#include "flash/synth.hpp"
#include "flash/train.hpp"

namespace flash {

// Plain "key = value" text. '#' starts a comment; blank lines are ignored.
// Keys must be unique. Every key has to be consumed by some reader, so
// misspelt keys surface as errors from check_consumed().
class KeyValueConfig {
   public:
    KeyValueConfig() = default;
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Each getter leaves `out` untouched when the key is absent.
    void get(const std::string& key, std::uint64_t& out);
    static_assert(std::is_same_v<std::size_t, std::uint64_t>);
    void get(const std::string& key, double& out);
    void get(const std::string& key, bool& out);
    void get(const std::string& key, std::string& out);
    void get(const std::string& key, std::vector<std::size_t>& out);

    // Throws listing every key that no getter asked for.
    void check_consumed() const;

   private:
    const std::string* take(const std::string& key);
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// Keys: model.input_height, model.width, model.embed_dim, model.depths,
// model.heads, model.window_h, model.window_w, model.mlp_ratio,
// model.dropout, model.enable_fa, model.enable_msf, model.alpha_init,
// model.cbam_kernel, model.cbam_max_reduction, model.seed.
void read_model_config(KeyValueConfig& kv, FlashConfig& cfg);
// Keys: train.epochs, train.batch, train.seed, train.checkpoint_every,
// train.warmup_epochs, train.cycle_length, train.peak_lr, train.lr_decay,
// train.floor_lr, train.beta1, train.beta2, train.eps, train.weight_decay.
void read_train_config(KeyValueConfig& kv, TrainConfig& cfg);
// Keys: synth.height, synth.width, synth.downsample, synth.sensor_height,
// synth.min_boxes, synth.max_boxes, synth.min_cylinders, synth.max_cylinders,
// synth.min_distance, synth.max_distance.
void read_synth_config(KeyValueConfig& kv, SynthConfig& cfg);

std::string to_kv(const FlashConfig& cfg);
std::string to_kv(const TrainConfig& cfg);

}  // namespace flash
