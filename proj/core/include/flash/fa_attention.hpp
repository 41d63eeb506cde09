#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flash/checkpoint.hpp"
#include "flash/tensor.hpp"

namespace flash {

// Tokens of an H x W x C map tiled into non-overlapping windows, optionally
// after a cyclic shift.
struct WindowGrid {
    Tensor windows;  // [N, window_h * window_w, C]
    std::size_t window_h = 0, window_w = 0;
    std::size_t height = 0, width = 0;
    std::size_t shift_h = 0, shift_w = 0;

    std::size_t count() const { return (height / window_h) * (width / window_w); }
    std::size_t tokens() const { return window_h * window_w; }
};

// Rolls x by (-shift_h, -shift_w), then tiles into windows.
WindowGrid window_partition(const Tensor& x, std::size_t window_h, std::size_t window_w, std::size_t shift_h = 0,
                            std::size_t shift_w = 0);
// Untiles and undoes the cyclic shift; exact inverse of window_partition.
Tensor window_reverse(const WindowGrid& grid);

struct FAParams {
    std::size_t channels = 0;
    std::size_t heads = 1;
    std::size_t window_h = 2, window_w = 8;

    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [C, C] and [C]
    Tensor bias_table;                      // [(2*Mh - 1) * (2*Mw - 1), heads]
    Tensor gate_weight;                     // [3, 3, 1, 1], zero-initialised
    Tensor gate_bias;                       // [1]
    Tensor alpha;                           // [1], frequency branch weight

    std::size_t head_dim() const { return channels / heads; }

    static FAParams init(std::size_t channels, std::size_t heads, std::size_t window_h, std::size_t window_w,
                         Rng& rng, double alpha_init = 0.1);
    void collect(ParameterList& out, const std::string& prefix) const;
};

// Relative-offset row of the bias table for every (query, key) token pair.
std::vector<std::size_t> relative_position_index(std::size_t window_h, std::size_t window_w);

// Additive mask [N, T, T] for a shifted grid: 0 within a region, -100 across
// the vertical wrap seam. Horizontal wrap is left unmasked (the scan is
// circular). Empty when shift_h == 0.
std::vector<double> shifted_window_mask(const WindowGrid& grid);

struct AttentionOptions {
    double dropout = 0.0;
    Rng* rng = nullptr;
    bool training = false;
    Tensor* weights_out = nullptr;  // receives softmax weights [N, heads, T, T]
};

// Multi-head window self-attention with relative position bias.
WindowGrid spatial_attention(const WindowGrid& grid, const FAParams& p, const AttentionOptions& opts = {});

// Global frequency path on the full H x W x C map; returns [H, W].
// gate_out, when given, receives the sigmoid gate [H, W, 1].
Tensor frequency_branch(const Tensor& x, const FAParams& p, Tensor* gate_out = nullptr);

// Spatial window attention plus alpha times the frequency path broadcast over
// channels. With enable_frequency == false only the spatial path runs.
Tensor fa_forward(const Tensor& x, const FAParams& p, std::size_t shift_h, std::size_t shift_w,
                  bool enable_frequency = true, const AttentionOptions& opts = {});

}  // namespace flash
