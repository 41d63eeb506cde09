#pragma once

#include <cstddef>
#include <string>

#include "flash/checkpoint.hpp"
#include "flash/tensor.hpp"

namespace flash {

// Convolutional block attention: channel gate from pooled statistics through
// a shared two-layer MLP, then a spatial gate from a k x k conv over the
// channel-wise mean and max maps.
struct CBAMParams {
    std::size_t channels = 0;
    std::size_t reduction = 1;
    std::size_t kernel = 7;

    Tensor fc1_w, fc1_b;  // [C, C/r], [C/r]
    Tensor fc2_w, fc2_b;  // [C/r, C], [C]
    Tensor spatial_w;     // [k, k, 2, 1]
    Tensor spatial_b;     // [1]

    static CBAMParams init(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng);
    void collect(ParameterList& out, const std::string& prefix) const;
};

struct CBAMTrace {
    Tensor channel_gate;  // [1, 1, C]
    Tensor spatial_gate;  // [H, W, 1]
};

Tensor cbam(const Tensor& x, const CBAMParams& p, CBAMTrace* trace = nullptr);

struct MSFParams {
    std::size_t channels = 0;
    std::size_t encoder_channels = 0;  // differs from channels => aligning projection

    Tensor align_w, align_b;  // [Ce, C], [C]; undefined when not needed
    Tensor conv1_w, conv1_b;  // [1, 1, C, C]
    Tensor conv3_w, conv3_b;  // [3, 3, C, C]
    Tensor conv5_w, conv5_b;  // [5, 5, C, C]
    Tensor gen_w, gen_b;      // [1, 1, 3C, 3], [3]
    CBAMParams cbam;

    static MSFParams init(std::size_t encoder_channels, std::size_t channels, std::size_t cbam_reduction,
                          std::size_t cbam_kernel, Rng& rng);
    void collect(ParameterList& out, const std::string& prefix) const;
};

struct MSFTrace {
    Tensor combined;     // X_e + X_d
    Tensor weights;      // per-position scale weights [H, W, 3]
    Tensor fused;        // before CBAM
    CBAMTrace cbam;
};

// Adaptive multi-scale skip fusion of encoder and decoder features.
Tensor msf_fuse(const Tensor& encoder, const Tensor& decoder, const MSFParams& p, MSFTrace* trace = nullptr);

}  // namespace flash
