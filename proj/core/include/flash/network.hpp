#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flash/checkpoint.hpp"
#include "flash/fa_attention.hpp"
#include "flash/msf.hpp"
#include "flash/tensor.hpp"

namespace flash {

// Architecture hyperparameters. Defaults are the desk-scale configuration;
// full_scale() gives the full-size 16x1024 -> 64x1024 model.
struct FlashConfig {
    static constexpr std::size_t kUpscale = 4;
    static constexpr std::size_t kPatchWidth = 4;

    std::size_t input_height = 16;
    std::size_t width = 256;
    std::size_t embed_dim = 32;
    std::vector<std::size_t> depths{2, 2, 2, 2};
    std::vector<std::size_t> heads{2, 4, 8, 16};
    std::size_t window_h = 2;
    std::size_t window_w = 8;
    std::size_t mlp_ratio = 4;
    double dropout = 0.0;
    bool enable_fa = true;
    bool enable_msf = true;
    double alpha_init = 0.1;
    std::size_t cbam_kernel = 7;
    std::size_t cbam_max_reduction = 4;
    std::uint64_t seed = 0;

    std::size_t stages() const { return depths.size(); }
    std::size_t output_height() const { return kUpscale * input_height; }
    std::size_t token_width() const { return width / kPatchWidth; }
    std::size_t stage_channels(std::size_t stage) const { return embed_dim << stage; }

    void validate() const;

    static FlashConfig full_scale();
    // H_l=8, W=32, C=8, depths [1,1], window 2x4.
    static FlashConfig tiny();
};

struct LayerNormParams {
    Tensor gain, offset;
    static LayerNormParams init(std::size_t dim);
    Tensor operator()(const Tensor& x) const;
    void collect(ParameterList& out, const std::string& prefix) const;
};

struct BlockParams {
    LayerNormParams norm1;
    FAParams attn;
    LayerNormParams norm2;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
    std::size_t shift_h = 0, shift_w = 0;

    void collect(ParameterList& out, const std::string& prefix) const;
};

// Per-call options; dropout is only active when `stochastic` is set.
struct ForwardOptions {
    bool stochastic = false;
    double dropout = -1.0;  // < 0: use config value
    Rng* rng = nullptr;
};

// Row-based patch embedding: [H, W] -> [H, W/4, C] via linear + LayerNorm.
Tensor patch_embed(const Tensor& img, const Tensor& weight, const Tensor& bias, const LayerNormParams& norm);
// [H, W, C] -> [H/2, W/2, 2C]: concatenates each 2x2 neighbourhood, then linear 4C -> 2C.
Tensor patch_merge(const Tensor& x, const Tensor& weight);
// [H, W, C] -> [2H, 2W, C/2]: linear C -> 2C, then redistributes into 2x2 blocks.
Tensor patch_expand(const Tensor& x, const Tensor& weight);

class FlashModel {
   public:
    explicit FlashModel(FlashConfig cfg);

    const FlashConfig& config() const { return cfg_; }
    ParameterList parameters() const;
    std::size_t parameter_count() const;

    // [H_l, W] log-range -> [4 H_l, W] log-range.
    Tensor forward(const Tensor& lowres, const ForwardOptions& opts = {}) const;

    // Shift schedule (alternating zero / half-window) for a block.
    std::pair<std::size_t, std::size_t> block_shift(std::size_t stage, std::size_t block) const;

   private:
    struct Stage {
        std::vector<BlockParams> blocks;
        Tensor merge_w;  // encoder: [4C, 2C]; undefined on the last stage
    };
    struct DecoderStage {
        Tensor expand_w;  // [2C, 4C]: coarser level 2C -> [2H, 2W, C]
        MSFParams msf;    // used when enable_msf
        Tensor concat_w, concat_b;  // [2C, C] otherwise
        std::vector<BlockParams> blocks;
    };

    Tensor run_block(const Tensor& x, const BlockParams& b, const ForwardOptions& opts, Rng* rng) const;

    FlashConfig cfg_;
    Tensor embed_w, embed_b;
    LayerNormParams embed_norm;
    std::vector<Stage> encoder_;
    std::vector<DecoderStage> decoder_;  // decoder_[l] produces level l
    LayerNormParams final_norm;
    Tensor head_h_w, head_h_b;  // [C, 4C]: undoes the 1x4 horizontal patching
    Tensor head_v_w, head_v_b;  // [C, C]: redistributes into 4 rows of C/4
    Tensor out_w, out_b;        // [C/4, 1]
};

struct L1Result {
    Tensor loss;          // scalar
    std::size_t valid = 0;
    bool empty = false;   // no valid cell; loss is 0
};

// Mean |pred - target| over mask-valid cells.
L1Result l1_loss(const Tensor& pred, const Tensor& target, const std::vector<std::uint8_t>& mask);

}  // namespace flash
