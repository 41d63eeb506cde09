#include "flash/fa_attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flash/fft.hpp"
#include "flash/init.hpp"
#include "flash/ops.hpp"

namespace flash {

WindowGrid window_partition(const Tensor& x, std::size_t window_h, std::size_t window_w, std::size_t shift_h,
                            std::size_t shift_w) {
    if (x.rank() != 3) throw std::invalid_argument("window_partition: expected [H, W, C], got " + shape_str(x.shape()));
    const std::size_t h = x.size(0), w = x.size(1), c = x.size(2);
    if (window_h == 0 || window_w == 0 || h % window_h != 0 || w % window_w != 0)
        throw std::invalid_argument("window_partition: " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by window " + std::to_string(window_h) + "x" +
                                    std::to_string(window_w));
    if (shift_h >= window_h || shift_w >= window_w)
        throw std::invalid_argument("window_partition: shift must be smaller than the window");

    Tensor src = x;
    if (shift_h || shift_w)
        src = ops::roll(x, {-static_cast<std::ptrdiff_t>(shift_h), -static_cast<std::ptrdiff_t>(shift_w), 0});
    Tensor t = ops::reshape(src, {h / window_h, window_h, w / window_w, window_w, c});
    t = ops::permute(t, {0, 2, 1, 3, 4});
    t = ops::reshape(t, {(h / window_h) * (w / window_w), window_h * window_w, c});
    return {t, window_h, window_w, h, w, shift_h, shift_w};
}

Tensor window_reverse(const WindowGrid& g) {
    const std::size_t c = g.windows.size(2);
    Tensor t = ops::reshape(g.windows, {g.height / g.window_h, g.width / g.window_w, g.window_h, g.window_w, c});
    t = ops::permute(t, {0, 2, 1, 3, 4});
    t = ops::reshape(t, {g.height, g.width, c});
    if (g.shift_h || g.shift_w)
        t = ops::roll(t, {static_cast<std::ptrdiff_t>(g.shift_h), static_cast<std::ptrdiff_t>(g.shift_w), 0});
    return t;
}

FAParams FAParams::init(std::size_t channels, std::size_t heads, std::size_t window_h, std::size_t window_w, Rng& rng,
                        double alpha_init) {
    if (heads == 0 || channels % heads != 0)
        throw std::invalid_argument("FAParams: channels " + std::to_string(channels) + " not divisible by heads " +
                                    std::to_string(heads));
    FAParams p;
    p.channels = channels;
    p.heads = heads;
    p.window_h = window_h;
    p.window_w = window_w;
    p.wq = init::normal({channels, channels}, 0.02, rng);
    p.wk = init::normal({channels, channels}, 0.02, rng);
    p.wv = init::normal({channels, channels}, 0.02, rng);
    p.wo = init::normal({channels, channels}, 0.02, rng);
    p.bq = init::zeros({channels});
    p.bk = init::zeros({channels});
    p.bv = init::zeros({channels});
    p.bo = init::zeros({channels});
    p.bias_table = init::normal({(2 * window_h - 1) * (2 * window_w - 1), heads}, 0.02, rng);
    p.gate_weight = init::zeros({3, 3, 1, 1});
    p.gate_bias = init::zeros({1});
    p.alpha = init::constant({1}, alpha_init);
    return p;
}

void FAParams::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".bq", bq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".bk", bk});
    out.push_back({prefix + ".wv", wv});
    out.push_back({prefix + ".bv", bv});
    out.push_back({prefix + ".wo", wo});
    out.push_back({prefix + ".bo", bo});
    out.push_back({prefix + ".bias_table", bias_table});
    out.push_back({prefix + ".gate_weight", gate_weight});
    out.push_back({prefix + ".gate_bias", gate_bias});
    out.push_back({prefix + ".alpha", alpha});
}

std::vector<std::size_t> relative_position_index(std::size_t window_h, std::size_t window_w) {
    const std::size_t t = window_h * window_w;
    std::vector<std::size_t> idx(t * t);
    for (std::size_t a = 0; a < t; ++a)
        for (std::size_t b = 0; b < t; ++b) {
            const std::size_t dh = (a / window_w) + window_h - 1 - (b / window_w);
            const std::size_t dw = (a % window_w) + window_w - 1 - (b % window_w);
            idx[a * t + b] = dh * (2 * window_w - 1) + dw;
        }
    return idx;
}

std::vector<double> shifted_window_mask(const WindowGrid& g) {
    if (g.shift_h == 0) return {};
    const std::size_t t = g.tokens();
    const std::size_t cols = g.width / g.window_w;
    auto region = [&](std::size_t row) -> int {
        if (row < g.height - g.window_h) return 0;
        if (row < g.height - g.shift_h) return 1;
        return 2;
    };
    std::vector<double> mask(g.count() * t * t, 0.0);
    for (std::size_t n = 0; n < g.count(); ++n) {
        const std::size_t row0 = (n / cols) * g.window_h;
        for (std::size_t a = 0; a < t; ++a)
            for (std::size_t b = 0; b < t; ++b)
                if (region(row0 + a / g.window_w) != region(row0 + b / g.window_w))
                    mask[(n * t + a) * t + b] = -100.0;
    }
    return mask;
}

WindowGrid spatial_attention(const WindowGrid& g, const FAParams& p, const AttentionOptions& opts) {
    const Tensor& x = g.windows;
    if (x.rank() != 3 || x.size(2) != p.channels)
        throw std::invalid_argument("spatial_attention: windows " + shape_str(x.shape()) + " do not match " +
                                    std::to_string(p.channels) + " channels");
    if (g.window_h != p.window_h || g.window_w != p.window_w)
        throw std::invalid_argument("spatial_attention: window size differs from parameter window size");
    const std::size_t n = x.size(0), t = x.size(1), c = p.channels, h = p.heads, d = p.head_dim();

    auto split_heads = [&](const Tensor& proj) {
        Tensor r = ops::reshape(proj, {n, t, h, d});
        r = ops::permute(r, {0, 2, 1, 3});
        return ops::reshape(r, {n * h, t, d});
    };
    Tensor q = split_heads(ops::linear(x, p.wq, p.bq));
    Tensor k = split_heads(ops::linear(x, p.wk, p.bk));
    Tensor v = split_heads(ops::linear(x, p.wv, p.bv));

    Tensor logits = ops::scale(ops::matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d)));
    logits = ops::reshape(logits, {n, h, t, t});

    Tensor bias = ops::index_select(p.bias_table, relative_position_index(g.window_h, g.window_w));
    bias = ops::permute(ops::reshape(bias, {t, t, h}), {2, 0, 1});
    logits = ops::add(logits, ops::reshape(bias, {1, h, t, t}));

    auto mask = shifted_window_mask(g);
    if (!mask.empty()) logits = ops::add(logits, Tensor({n, 1, t, t}, std::move(mask)));

    Tensor attn = ops::softmax(logits, 3);
    if (opts.weights_out) *opts.weights_out = attn;

    Tensor out = ops::matmul(ops::reshape(attn, {n * h, t, t}), v);
    out = ops::permute(ops::reshape(out, {n, h, t, d}), {0, 2, 1, 3});
    out = ops::linear(ops::reshape(out, {n, t, c}), p.wo, p.bo);
    if (opts.rng) out = ops::dropout(out, opts.dropout, *opts.rng, opts.training);

    WindowGrid result = g;
    result.windows = out;
    return result;
}

Tensor frequency_branch(const Tensor& x, const FAParams& p, Tensor* gate_out) {
    if (x.rank() != 3) throw std::invalid_argument("frequency_branch: expected [H, W, C]");
    const std::size_t h = x.size(0), w = x.size(1);
    if (!is_power_of_two(h) || !is_power_of_two(w))
        throw std::invalid_argument("frequency_branch: " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is not a power-of-two grid");
    Tensor m = ops::reshape(ops::mean_axis(x, 2), {h, w});
    Tensor spectrum = ops::fft2d(m);
    Tensor magnitude = ops::reshape(ops::complex_abs(spectrum), {h, w, 1});
    Tensor gate = ops::sigmoid(
        ops::conv2d(magnitude, p.gate_weight, p.gate_bias, ops::PadMode::circular_horizontal));
    if (gate_out) *gate_out = gate;
    // ifft(X * g) written as 0.5 m + ifft(X * (g - 0.5)): equal by linearity,
    // and exact at the sigmoid(0) fixpoint. The real gate preserves phase.
    Tensor centred = ops::sub(gate, Tensor(Shape{1, 1, 1}, 0.5));
    return ops::add(ops::scale(m, 0.5), ops::ifft2d_real(ops::mul(spectrum, centred)));
}

Tensor fa_forward(const Tensor& x, const FAParams& p, std::size_t shift_h, std::size_t shift_w,
                  bool enable_frequency, const AttentionOptions& opts) {
    WindowGrid grid = window_partition(x, p.window_h, p.window_w, shift_h, shift_w);
    Tensor spatial = window_reverse(spatial_attention(grid, p, opts));
    if (!enable_frequency) return spatial;
    const std::size_t h = x.size(0), w = x.size(1);
    Tensor freq = ops::reshape(frequency_branch(x, p), {h, w, 1});
    return ops::add(spatial, ops::mul(freq, ops::reshape(p.alpha, {1, 1, 1})));
}

}  // namespace flash
