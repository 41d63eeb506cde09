#include "flash/msf.hpp"

#include <cmath>
#include <stdexcept>

#include "flash/init.hpp"
#include "flash/ops.hpp"

namespace flash {

namespace {

Tensor conv_weight(std::size_t k, std::size_t cin, std::size_t cout, Rng& rng) {
    return init::normal({k, k, cin, cout}, 1.0 / std::sqrt(static_cast<double>(k * k * cin)), rng);
}

}  // namespace

CBAMParams CBAMParams::init(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng) {
    if (reduction == 0 || channels / reduction == 0)
        throw std::invalid_argument("cbam: reduction " + std::to_string(reduction) + " too large for " +
                                    std::to_string(channels) + " channels");
    CBAMParams p;
    p.channels = channels;
    p.reduction = reduction;
    p.kernel = kernel;
    const std::size_t hidden = channels / reduction;
    p.fc1_w = init::normal({channels, hidden}, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
    p.fc1_b = init::zeros({hidden});
    p.fc2_w = init::normal({hidden, channels}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    p.fc2_b = init::zeros({channels});
    p.spatial_w = conv_weight(kernel, 2, 1, rng);
    p.spatial_b = init::zeros({1});
    return p;
}

void CBAMParams::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".fc1_w", fc1_w});
    out.push_back({prefix + ".fc1_b", fc1_b});
    out.push_back({prefix + ".fc2_w", fc2_w});
    out.push_back({prefix + ".fc2_b", fc2_b});
    out.push_back({prefix + ".spatial_w", spatial_w});
    out.push_back({prefix + ".spatial_b", spatial_b});
}

Tensor cbam(const Tensor& x, const CBAMParams& p, CBAMTrace* trace) {
    if (x.rank() != 3 || x.size(2) != p.channels)
        throw std::invalid_argument("cbam: expected [H, W, " + std::to_string(p.channels) + "], got " +
                                    shape_str(x.shape()));
    const std::size_t h = x.size(0), w = x.size(1), c = x.size(2);

    Tensor flat = ops::reshape(x, {h * w, c});
    auto mlp = [&](const Tensor& pooled) {
        return ops::linear(ops::relu(ops::linear(pooled, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b);
    };
    Tensor channel_gate =
        ops::sigmoid(ops::add(mlp(ops::mean_axis(flat, 0)), mlp(ops::max_axis(flat, 0))));
    channel_gate = ops::reshape(channel_gate, {1, 1, c});
    Tensor refined = ops::mul(x, channel_gate);

    Tensor pooled = ops::concat({ops::mean_axis(refined, 2), ops::max_axis(refined, 2)}, 2);
    Tensor spatial_gate =
        ops::sigmoid(ops::conv2d(pooled, p.spatial_w, p.spatial_b, ops::PadMode::circular_horizontal));
    if (trace) {
        trace->channel_gate = channel_gate;
        trace->spatial_gate = spatial_gate;
    }
    return ops::mul(refined, spatial_gate);
}

MSFParams MSFParams::init(std::size_t encoder_channels, std::size_t channels, std::size_t cbam_reduction,
                          std::size_t cbam_kernel, Rng& rng) {
    MSFParams p;
    p.channels = channels;
    p.encoder_channels = encoder_channels;
    if (encoder_channels != channels) {
        p.align_w = init::normal({encoder_channels, channels}, 0.02, rng);
        p.align_b = init::zeros({channels});
    }
    p.conv1_w = conv_weight(1, channels, channels, rng);
    p.conv1_b = init::zeros({channels});
    p.conv3_w = conv_weight(3, channels, channels, rng);
    p.conv3_b = init::zeros({channels});
    p.conv5_w = conv_weight(5, channels, channels, rng);
    p.conv5_b = init::zeros({channels});
    p.gen_w = init::normal({1, 1, 3 * channels, 3}, 0.02, rng);
    p.gen_b = init::zeros({3});
    p.cbam = CBAMParams::init(channels, cbam_reduction, cbam_kernel, rng);
    return p;
}

void MSFParams::collect(ParameterList& out, const std::string& prefix) const {
    if (align_w.defined()) {
        out.push_back({prefix + ".align_w", align_w});
        out.push_back({prefix + ".align_b", align_b});
    }
    out.push_back({prefix + ".conv1_w", conv1_w});
    out.push_back({prefix + ".conv1_b", conv1_b});
    out.push_back({prefix + ".conv3_w", conv3_w});
    out.push_back({prefix + ".conv3_b", conv3_b});
    out.push_back({prefix + ".conv5_w", conv5_w});
    out.push_back({prefix + ".conv5_b", conv5_b});
    out.push_back({prefix + ".gen_w", gen_w});
    out.push_back({prefix + ".gen_b", gen_b});
    cbam.collect(out, prefix + ".cbam");
}

Tensor msf_fuse(const Tensor& encoder, const Tensor& decoder, const MSFParams& p, MSFTrace* trace) {
    if (encoder.rank() != 3 || decoder.rank() != 3)
        throw std::invalid_argument("msf_fuse: inputs must be [H, W, C]");
    if (encoder.size(0) != decoder.size(0) || encoder.size(1) != decoder.size(1))
        throw std::invalid_argument("msf_fuse: spatial mismatch " + shape_str(encoder.shape()) + " vs " +
                                    shape_str(decoder.shape()));
    Tensor xe = p.align_w.defined() ? ops::linear(encoder, p.align_w, p.align_b) : encoder;
    if (xe.size(2) != p.channels || decoder.size(2) != p.channels)
        throw std::invalid_argument("msf_fuse: channel mismatch after alignment");

    Tensor combined = ops::add(xe, decoder);
    const auto pad = ops::PadMode::circular_horizontal;
    Tensor f1 = ops::conv2d(combined, p.conv1_w, p.conv1_b, pad);
    Tensor f3 = ops::conv2d(combined, p.conv3_w, p.conv3_b, pad);
    Tensor f5 = ops::conv2d(combined, p.conv5_w, p.conv5_b, pad);

    Tensor logits = ops::conv2d(ops::concat({f1, f3, f5}, 2), p.gen_w, p.gen_b, pad);
    Tensor weights = ops::softmax(logits, 2);
    // W1 F1 + W2 F3 + W3 F5 with W1 = 1 - W2 - W3; exact when the scales agree.
    Tensor fused = ops::add(ops::add(f1, ops::mul(ops::slice(weights, 2, 1, 2), ops::sub(f3, f1))),
                            ops::mul(ops::slice(weights, 2, 2, 3), ops::sub(f5, f1)));
    if (trace) {
        trace->combined = combined;
        trace->weights = weights;
        trace->fused = fused;
    }
    return cbam(fused, p.cbam, trace ? &trace->cbam : nullptr);
}

}  // namespace flash
