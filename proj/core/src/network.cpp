#include "flash/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>

#include "flash/fft.hpp"
#include "flash/init.hpp"
#include "flash/ops.hpp"

namespace flash {

namespace {

std::string level_name(const char* part, std::size_t i) { return std::string(part) + std::to_string(i); }

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("FlashConfig: " + what);
}

}  // namespace

void FlashConfig::validate() const {
    require(input_height > 0 && width > 0, "dimensions must be positive");
    require(width % kPatchWidth == 0, "width " + std::to_string(width) + " not divisible by patch width 4");
    require(!depths.empty(), "at least one stage required");
    require(heads.size() == depths.size(), "heads and depths must have the same length");
    require(window_h > 0 && window_w > 0, "window must be positive");
    require(embed_dim % 4 == 0, "embed_dim must be divisible by 4 for the output head");
    require(mlp_ratio > 0, "mlp_ratio must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    for (std::size_t s = 0; s < stages(); ++s) {
        const std::size_t h = input_height >> s, w = token_width() >> s;
        require((input_height % (std::size_t{1} << s)) == 0 && (token_width() % (std::size_t{1} << s)) == 0,
                "stage " + std::to_string(s) + " resolution is not integral");
        require(h % window_h == 0 && w % window_w == 0,
                "stage " + std::to_string(s) + " grid " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by the window");
        if (enable_fa)
            require(is_power_of_two(h) && is_power_of_two(w),
                    "stage " + std::to_string(s) + " grid must be power-of-two for the frequency branch");
        require(heads[s] > 0 && stage_channels(s) % heads[s] == 0,
                "stage " + std::to_string(s) + " channels not divisible by heads");
        require(depths[s] > 0, "stage depths must be positive");
    }
}

FlashConfig FlashConfig::full_scale() {
    FlashConfig c;
    c.input_height = 16;
    c.width = 1024;
    c.embed_dim = 96;
    c.depths = {2, 2, 2, 2};
    c.heads = {3, 6, 12, 24};
    return c;
}

FlashConfig FlashConfig::tiny() {
    FlashConfig c;
    c.input_height = 8;
    c.width = 32;
    c.embed_dim = 8;
    c.depths = {1, 1};
    c.heads = {2, 2};
    c.window_h = 2;
    c.window_w = 4;
    return c;
}

LayerNormParams LayerNormParams::init(std::size_t dim) { return {init::constant({dim}, 1.0), init::zeros({dim})}; }

Tensor LayerNormParams::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, offset); }

void LayerNormParams::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".offset", offset});
}

void BlockParams::collect(ParameterList& out, const std::string& prefix) const {
    norm1.collect(out, prefix + ".norm1");
    attn.collect(out, prefix + ".attn");
    norm2.collect(out, prefix + ".norm2");
    out.push_back({prefix + ".fc1_w", fc1_w});
    out.push_back({prefix + ".fc1_b", fc1_b});
    out.push_back({prefix + ".fc2_w", fc2_w});
    out.push_back({prefix + ".fc2_b", fc2_b});
}

Tensor patch_embed(const Tensor& img, const Tensor& weight, const Tensor& bias, const LayerNormParams& norm) {
    if (img.rank() != 2) throw std::invalid_argument("patch_embed: expected [H, W], got " + shape_str(img.shape()));
    const std::size_t h = img.size(0), w = img.size(1);
    if (w % FlashConfig::kPatchWidth != 0)
        throw std::invalid_argument("patch_embed: width " + std::to_string(w) + " not divisible by 4");
    Tensor patches = ops::reshape(img, {h, w / FlashConfig::kPatchWidth, FlashConfig::kPatchWidth});
    return norm(ops::linear(patches, weight, bias));
}

Tensor patch_merge(const Tensor& x, const Tensor& weight) {
    if (x.rank() != 3 || x.size(0) % 2 || x.size(1) % 2)
        throw std::invalid_argument("patch_merge: expected [H, W, C] with even H and W, got " + shape_str(x.shape()));
    const std::size_t h = x.size(0), w = x.size(1), c = x.size(2);
    // Neighbourhood order (r, c): (0,0), (1,0), (0,1), (1,1).
    Tensor t = ops::reshape(x, {h / 2, 2, w / 2, 2, c});
    t = ops::permute(t, {0, 2, 3, 1, 4});
    t = ops::reshape(t, {h / 2, w / 2, 4 * c});
    return ops::linear(t, weight, Tensor());
}

Tensor patch_expand(const Tensor& x, const Tensor& weight) {
    if (x.rank() != 3 || x.size(2) % 2)
        throw std::invalid_argument("patch_expand: expected [H, W, C] with even C, got " + shape_str(x.shape()));
    const std::size_t h = x.size(0), w = x.size(1), c = x.size(2);
    Tensor t = ops::linear(x, weight, Tensor());  // [H, W, 2C] = (p1, p2, C/2)
    t = ops::reshape(t, {h, w, 2, 2, c / 2});
    t = ops::permute(t, {0, 2, 1, 3, 4});
    return ops::reshape(t, {2 * h, 2 * w, c / 2});
}

namespace {

BlockParams make_block(std::size_t channels, std::size_t heads, const FlashConfig& cfg, Rng& rng) {
    BlockParams b;
    b.norm1 = LayerNormParams::init(channels);
    b.attn = FAParams::init(channels, heads, cfg.window_h, cfg.window_w, rng, cfg.alpha_init);
    b.norm2 = LayerNormParams::init(channels);
    const std::size_t hidden = channels * cfg.mlp_ratio;
    b.fc1_w = init::normal({channels, hidden}, 0.02, rng);
    b.fc1_b = init::zeros({hidden});
    b.fc2_w = init::normal({hidden, channels}, 0.02, rng);
    b.fc2_b = init::zeros({channels});
    return b;
}

}  // namespace

FlashModel::FlashModel(FlashConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng root(cfg_.seed);
    const std::size_t c = cfg_.embed_dim;

    Rng r_embed = root.split(1);
    embed_w = init::normal({FlashConfig::kPatchWidth, c}, 0.02, r_embed);
    embed_b = init::zeros({c});
    embed_norm = LayerNormParams::init(c);

    const std::size_t stages = cfg_.stages();
    for (std::size_t s = 0; s < stages; ++s) {
        Rng rs = root.split(100 + s);
        const std::size_t ch = cfg_.stage_channels(s);
        Stage st;
        for (std::size_t b = 0; b < cfg_.depths[s]; ++b) {
            st.blocks.push_back(make_block(ch, cfg_.heads[s], cfg_, rs));
            std::tie(st.blocks.back().shift_h, st.blocks.back().shift_w) = block_shift(s, b);
        }
        if (s + 1 < stages) st.merge_w = init::normal({4 * ch, 2 * ch}, 0.02, rs);
        encoder_.push_back(std::move(st));
    }

    decoder_.resize(stages > 0 ? stages - 1 : 0);
    for (std::size_t l = 0; l + 1 < stages; ++l) {
        Rng rd = root.split(200 + l);
        const std::size_t ch = cfg_.stage_channels(l);
        DecoderStage& d = decoder_[l];
        d.expand_w = init::normal({2 * ch, 4 * ch}, 0.02, rd);
        if (cfg_.enable_msf) {
            const std::size_t reduction = std::min(cfg_.cbam_max_reduction, ch);
            d.msf = MSFParams::init(ch, ch, reduction, cfg_.cbam_kernel, rd);
        } else {
            d.concat_w = init::normal({2 * ch, ch}, 0.02, rd);
            d.concat_b = init::zeros({ch});
        }
        for (std::size_t b = 0; b < cfg_.depths[l]; ++b) {
            d.blocks.push_back(make_block(ch, cfg_.heads[l], cfg_, rd));
            std::tie(d.blocks.back().shift_h, d.blocks.back().shift_w) = block_shift(l, b);
        }
    }

    Rng rh = root.split(300);
    final_norm = LayerNormParams::init(c);
    head_h_w = init::normal({c, 4 * c}, 0.02, rh);
    head_h_b = init::zeros({4 * c});
    head_v_w = init::normal({c, c}, 0.02, rh);
    head_v_b = init::zeros({c});
    out_w = init::normal({c / 4, 1}, 0.02, rh);
    out_b = init::zeros({1});
}

std::pair<std::size_t, std::size_t> FlashModel::block_shift(std::size_t stage, std::size_t block) const {
    if (block % 2 == 0) return {0, 0};
    const std::size_t h = cfg_.input_height >> stage, w = cfg_.token_width() >> stage;
    // A window covering the whole axis gains nothing from shifting.
    return {h > cfg_.window_h ? cfg_.window_h / 2 : 0, w > cfg_.window_w ? cfg_.window_w / 2 : 0};
}

ParameterList FlashModel::parameters() const {
    ParameterList out;
    out.push_back({"embed.w", embed_w});
    out.push_back({"embed.b", embed_b});
    embed_norm.collect(out, "embed.norm");
    for (std::size_t s = 0; s < encoder_.size(); ++s) {
        const auto prefix = level_name("enc", s);
        for (std::size_t b = 0; b < encoder_[s].blocks.size(); ++b)
            encoder_[s].blocks[b].collect(out, prefix + ".block" + std::to_string(b));
        if (encoder_[s].merge_w.defined()) out.push_back({prefix + ".merge_w", encoder_[s].merge_w});
    }
    for (std::size_t l = decoder_.size(); l-- > 0;) {
        const auto prefix = level_name("dec", l);
        const auto& d = decoder_[l];
        out.push_back({prefix + ".expand_w", d.expand_w});
        if (cfg_.enable_msf) {
            d.msf.collect(out, prefix + ".msf");
        } else {
            out.push_back({prefix + ".concat_w", d.concat_w});
            out.push_back({prefix + ".concat_b", d.concat_b});
        }
        for (std::size_t b = 0; b < d.blocks.size(); ++b) d.blocks[b].collect(out, prefix + ".block" + std::to_string(b));
    }
    final_norm.collect(out, "final_norm");
    out.push_back({"head.h_w", head_h_w});
    out.push_back({"head.h_b", head_h_b});
    out.push_back({"head.v_w", head_v_w});
    out.push_back({"head.v_b", head_v_b});
    out.push_back({"head.out_w", out_w});
    out.push_back({"head.out_b", out_b});
    return out;
}

std::size_t FlashModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

Tensor FlashModel::run_block(const Tensor& x, const BlockParams& b, const ForwardOptions& opts, Rng* rng) const {
    const double p = opts.dropout >= 0.0 ? opts.dropout : cfg_.dropout;
    AttentionOptions ao;
    ao.dropout = p;
    ao.rng = rng;
    ao.training = opts.stochastic;
    Tensor h = ops::add(x, fa_forward(b.norm1(x), b.attn, b.shift_h, b.shift_w, cfg_.enable_fa, ao));
    Tensor m = ops::linear(ops::gelu(ops::linear(b.norm2(h), b.fc1_w, b.fc1_b)), b.fc2_w, b.fc2_b);
    if (rng) m = ops::dropout(m, p, *rng, opts.stochastic);
    return ops::add(h, m);
}

Tensor FlashModel::forward(const Tensor& lowres, const ForwardOptions& opts) const {
    if (lowres.rank() != 2 || lowres.size(0) != cfg_.input_height || lowres.size(1) != cfg_.width)
        throw std::invalid_argument("forward: input " + shape_str(lowres.shape()) + " does not match config " +
                                    std::to_string(cfg_.input_height) + "x" + std::to_string(cfg_.width));
    if (opts.stochastic && !opts.rng) throw std::invalid_argument("forward: stochastic pass requires an rng");
    Rng* rng = opts.stochastic ? opts.rng : nullptr;

    Tensor x = patch_embed(lowres, embed_w, embed_b, embed_norm);
    std::vector<Tensor> skips;
    for (std::size_t s = 0; s < encoder_.size(); ++s) {
        for (const auto& b : encoder_[s].blocks) x = run_block(x, b, opts, rng);
        if (encoder_[s].merge_w.defined()) {
            skips.push_back(x);
            x = patch_merge(x, encoder_[s].merge_w);
        }
    }
    for (std::size_t l = decoder_.size(); l-- > 0;) {
        const auto& d = decoder_[l];
        x = patch_expand(x, d.expand_w);
        if (cfg_.enable_msf)
            x = msf_fuse(skips[l], x, d.msf);
        else
            x = ops::linear(ops::concat({x, skips[l]}, 2), d.concat_w, d.concat_b);
        for (const auto& b : d.blocks) x = run_block(x, b, opts, rng);
    }
    x = final_norm(x);

    const std::size_t h = cfg_.input_height, w = cfg_.width, c = cfg_.embed_dim;
    Tensor t = ops::linear(x, head_h_w, head_h_b);  // [H, W/4, 4C]
    t = ops::reshape(t, {h, w, c});
    t = ops::linear(t, head_v_w, head_v_b);  // [H, W, 4 * C/4]
    t = ops::reshape(t, {h, w, FlashConfig::kUpscale, c / 4});
    t = ops::permute(t, {0, 2, 1, 3});
    t = ops::reshape(t, {FlashConfig::kUpscale * h, w, c / 4});
    t = ops::linear(ops::gelu(t), out_w, out_b);
    return ops::reshape(t, {FlashConfig::kUpscale * h, w});
}

L1Result l1_loss(const Tensor& pred, const Tensor& target, const std::vector<std::uint8_t>& mask) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    if (mask.size() != pred.numel()) throw std::invalid_argument("l1_loss: mask size mismatch");
    L1Result r;
    std::vector<double> weights(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        weights[i] = mask[i] ? 1.0 : 0.0;
        r.valid += mask[i] != 0;
    }
    if (r.valid == 0) {
        r.empty = true;
        r.loss = Tensor::scalar(0.0);
        return r;
    }
    Tensor err = ops::mul(ops::abs(ops::sub(pred, target)), Tensor(pred.shape(), std::move(weights)));
    r.loss = ops::scale(ops::sum(err), 1.0 / static_cast<double>(r.valid));
    return r;
}

}  // namespace flash
