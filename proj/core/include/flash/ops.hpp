#pragma once

#include <cstddef>
#include <vector>

#include "flash/tensor.hpp"

// Differentiable kernels. Feature maps are channel-last (H x W x C) and carry
// no batch axis; batches are formed by running one graph per sample.
namespace flash::ops {

enum class PadMode {
    zeros,
    // Columns wrap around (360 degree azimuth continuity); rows are zero-padded.
    circular_horizontal,
};

// Elementwise with broadcasting over equal-rank operands (size-1 axes expand).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalises over the last axis; gain and offset have the last axis' length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps = 1e-5);

// Rank-2, or rank-3 batched with matching batch size. Transpose flags apply
// to the trailing two axes.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
// x[..., in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
// torch.roll semantics: out[(i + shift) mod n] = x[i], per axis.
Tensor roll(const Tensor& x, const std::vector<std::ptrdiff_t>& shifts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Gathers rows (axis 0) of `table`.
Tensor index_select(const Tensor& table, const std::vector<std::size_t>& rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reductions keep the reduced axis with size 1.
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor max_axis(const Tensor& x, std::size_t axis);

// Inverted dropout: scales survivors by 1/(1-p) when training, identity
// otherwise. p == 0 returns x without touching the generator.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Same-size cross-correlation. x[H, W, Cin], weight[k, k, Cin, Cout],
// bias[Cout] (may be undefined); k odd.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, PadMode pad);

// Real [H, W] -> complex [H, W, 2] (last axis = re, im), unnormalised DFT.
Tensor fft2d(const Tensor& x);
// Complex [H, W, 2] -> real part of the normalised inverse DFT, [H, W].
Tensor ifft2d_real(const Tensor& c);
// Complex [H, W, 2] -> magnitude [H, W].
Tensor complex_abs(const Tensor& c);

}  // namespace flash::ops
