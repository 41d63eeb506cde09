// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "flash/checkpoint.hpp"
#include "flash/evaluation.hpp"
#include "flash/fa_attention.hpp"
#include "flash/fft.hpp"
#include "flash/msf.hpp"
#include "flash/network.hpp"
#include "flash/ops.hpp"
#include "flash/optim.hpp"
#include "flash/parallel.hpp"
#include "flash/rangeimg.hpp"
#include "flash/synth.hpp"
#include "flash/train.hpp"
#include "geometry.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

using namespace flash;
using flash::testing::grad_check;
using flash::testing::random_parameter;
using flash::testing::random_tensor;

namespace {

struct Options {
    std::size_t threads = 0;
    std::size_t scenes = 200;
    std::size_t epochs = 60;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::uint64_t scene_seed = 2024;
    std::string out_dir;
};

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Collects named checks; remembers the first few failures for the summary.
struct Tally {
    std::size_t checks = 0, failed = 0;
    double worst = 0.0;
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        ++checks;
        if (ok) return;
        ++failed;
        if (failures.size() < 4) failures.push_back(what);
    }
    void below(double value, double tol, const std::string& what) {
        worst = std::max(worst, value);
        expect(value < tol, what + fmt(" (%.3g)", value));
    }
    std::string summary() const {
        std::string s = fmt("%zu/%zu checks", checks - failed, checks);
        for (const auto& f : failures) s += "; failed: " + f;
        return s;
    }
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

void randomise(ParameterList params, Rng& rng, double sd) {
    for (auto& p : params)
        for (auto& v : p.tensor.mutable_data()) v = rng.normal(0.0, sd);
}

void fill(Tensor& t, double v) {
    for (auto& x : t.mutable_data()) x = v;
}

FAParams random_fa(std::size_t c, std::size_t heads, std::size_t mh, std::size_t mw, Rng& rng) {
    FAParams p = FAParams::init(c, heads, mh, mw, rng);
    ParameterList params;
    p.collect(params, "fa");
    randomise(params, rng, 0.4);
    p.alpha.mutable_data()[0] = 0.3;
    return p;
}

std::vector<Tensor> with_params(std::vector<Tensor> inputs, const ParameterList& params) {
    for (auto& p : params) inputs.push_back(p.tensor);
    return inputs;
}

// ---- 1: gradients -------------------------------------------------------

Outcome gradients(const Options&) {
    const auto t0 = Clock::now();
    Tally t;
    Rng rng(101);
    auto check = [&](const std::string& name, auto f, std::vector<Tensor> inputs, double limit = 1e-4,
                     std::size_t max_coords = 0) {
        t.below(grad_check(f, inputs, 7, 1e-5, max_coords).rel_error, limit, name);
    };
    auto away_from_zero = [&](Shape s) {
        Tensor x = random_parameter(s, rng);
        for (auto& v : x.mutable_data()) v = (v < 0 ? -0.2 : 0.2) + 0.8 * v;
        return x;
    };

    Tensor a = random_parameter({3, 4}, rng), b = random_parameter({1, 4}, rng);
    check("add", [](auto& in) { return ops::add(in[0], in[1]); }, {a, b});
    check("sub", [](auto& in) { return ops::sub(in[0], in[1]); }, {a, b});
    check("mul", [](auto& in) { return ops::mul(in[0], in[1]); }, {a, b});
    check("scale", [](auto& in) { return ops::scale(in[0], -1.7); }, {a});
    check("square", [](auto& in) { return ops::square(in[0]); }, {a});
    check("abs", [](auto& in) { return ops::abs(in[0]); }, {away_from_zero({3, 4})});
    check("relu", [](auto& in) { return ops::relu(in[0]); }, {away_from_zero({3, 4})});
    check("gelu", [](auto& in) { return ops::gelu(in[0]); }, {a});
    check("sigmoid", [](auto& in) { return ops::sigmoid(in[0]); }, {a});

    Tensor x3 = random_parameter({3, 4, 5}, rng, -2, 2);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        check("softmax", [axis](auto& in) { return ops::softmax(in[0], axis); }, {x3});
        check("mean_axis", [axis](auto& in) { return ops::mean_axis(in[0], axis); }, {x3});
        check("max_axis", [axis](auto& in) { return ops::max_axis(in[0], axis); }, {x3});
    }
    check("sum", [](auto& in) { return ops::sum(in[0]); }, {x3});
    check("mean", [](auto& in) { return ops::mean(in[0]); }, {x3});
    check("layer_norm", [](auto& in) { return ops::layer_norm(in[0], in[1], in[2]); },
          {x3, random_parameter({5}, rng), random_parameter({5}, rng)});

    for (int k = 0; k < 4; ++k) {
        const bool ta = k & 1, tb = k & 2;
        Tensor ma = random_parameter(ta ? Shape{4, 3} : Shape{3, 4}, rng);
        Tensor mb = random_parameter(tb ? Shape{5, 4} : Shape{4, 5}, rng);
        check("matmul", [=](auto& in) { return ops::matmul(in[0], in[1], ta, tb); }, {ma, mb});
    }
    check("batched matmul", [](auto& in) { return ops::matmul(in[0], in[1], false, true); },
          {random_parameter({2, 3, 4}, rng), random_parameter({2, 3, 4}, rng)});
    Tensor x = random_parameter({2, 3, 4}, rng);
    check("linear", [](auto& in) { return ops::linear(in[0], in[1], in[2]); },
          {x, random_parameter({4, 6}, rng), random_parameter({6}, rng)});
    check("reshape", [](auto& in) { return ops::reshape(in[0], {6, 4}); }, {x});
    check("permute", [](auto& in) { return ops::permute(in[0], {2, 0, 1}); }, {x});
    check("roll", [](auto& in) { return ops::roll(in[0], {1, -2, 3}); }, {x});
    check("slice", [](auto& in) { return ops::slice(in[0], 2, 1, 3); }, {x});
    check("concat", [](auto& in) { return ops::concat({in[0], in[1]}, 2); }, {x, random_parameter({2, 3, 2}, rng)});
    check("index_select", [](auto& in) { return ops::index_select(in[0], {4, 0, 4, 2}); },
          {random_parameter({5, 3}, rng)});

    Tensor img = random_parameter({4, 6, 2}, rng);
    for (std::size_t k : {1u, 3u, 5u})
        for (auto pad : {ops::PadMode::zeros, ops::PadMode::circular_horizontal})
            check("conv2d", [pad](auto& in) { return ops::conv2d(in[0], in[1], in[2], pad); },
                  {img, random_parameter({k, k, 2, 3}, rng), random_parameter({3}, rng)});
    check("dropout",
          [](auto& in) {
              Rng r(99);
              return ops::dropout(in[0], 0.3, r, true);
          },
          {img});

    check("fft2d", [](auto& in) { return ops::fft2d(in[0]); }, {random_parameter({4, 8}, rng)});
    Tensor spec = random_parameter({4, 8, 2}, rng);
    check("ifft2d_real", [](auto& in) { return ops::ifft2d_real(in[0]); }, {spec});
    check("complex_abs", [](auto& in) { return ops::complex_abs(in[0]); }, {spec});

    LayerNormParams norm = LayerNormParams::init(6);
    for (Tensor* w : {&norm.gain, &norm.offset})
        for (auto& v : w->mutable_data()) v = rng.normal(0.0, 0.5);
    check("patch_embed", [&](auto& in) { return patch_embed(in[0], in[1], in[2], norm); },
          {random_parameter({2, 8}, rng), random_parameter({4, 6}, rng), random_parameter({6}, rng)});
    Tensor grid = random_parameter({4, 4, 3}, rng);
    check("patch_merge", [](auto& in) { return patch_merge(in[0], in[1]); }, {grid, random_parameter({12, 6}, rng)});
    check("patch_expand", [](auto& in) { return patch_expand(in[0], in[1]); },
          {random_parameter({2, 2, 4}, rng), random_parameter({4, 8}, rng)});
    Tensor target = random_tensor({3, 4}, rng);
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0};
    check("l1_loss", [&](auto& in) { return l1_loss(in[0], target, mask).loss; }, {away_from_zero({3, 4})});

    FAParams fa = random_fa(4, 2, 2, 4, rng);
    ParameterList fa_params;
    fa.collect(fa_params, "fa");
    Tensor fx = random_parameter({4, 8, 4}, rng);
    for (auto [sh, sw] : {std::pair{0u, 0u}, {1u, 2u}})
        check("fa_forward", [&, sh, sw](auto& in) { return fa_forward(in[0], fa, sh, sw); }, with_params({fx}, fa_params));
    check("frequency_branch", [&](auto& in) { return frequency_branch(in[0], fa); }, with_params({fx}, fa_params));

    MSFParams msf = MSFParams::init(6, 4, 2, 3, rng);
    ParameterList msf_params;
    msf.collect(msf_params, "msf");
    randomise(msf_params, rng, 0.4);
    check("msf_fuse", [&](auto& in) { return msf_fuse(in[0], in[1], msf); },
          with_params({random_parameter({2, 8, 6}, rng), random_parameter({2, 8, 4}, rng)}, msf_params));
    check("cbam", [&](auto& in) { return cbam(in[0], msf.cbam); }, {random_parameter({2, 8, 4}, rng)});

    FlashModel model(FlashConfig::tiny());
    randomise(model.parameters(), rng, 0.3);
    Tensor lowres = random_tensor({8, 32}, rng, 0.0, 4.0).set_requires_grad(true);
    check("tiny full model", [&](auto& in) { return model.forward(in[0]); }, with_params({lowres}, model.parameters()),
          1e-3, 6);

    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = t.failed == 0 && secs < 120.0;
    o.detail = t.summary() + fmt("; worst rel err %.2e; %.1f s (limit 120 s)", t.worst, secs);
    return o;
}

// ---- 2: FFT ---------------------------------------------------------------

ComplexGrid direct_dft(const std::vector<double>& x, std::size_t h, std::size_t w) {
    ComplexGrid out(h, w);
    for (std::size_t k = 0; k < h; ++k)
        for (std::size_t l = 0; l < w; ++l) {
            std::complex<double> s = 0.0;
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(k * r) / h + static_cast<double>(l * c) / w);
                    s += x[r * w + c] * std::polar(1.0, ang);
                }
            out.real[k * w + l] = s.real();
            out.imag[k * w + l] = s.imag();
        }
    return out;
}

Outcome fft(const Options&) {
    const auto t0 = Clock::now();
    Tally t;
    constexpr double tol = 1e-9;
    Rng rng(202);
    auto random_grid = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& e : v) e = rng.normal();
        return v;
    };
    for (std::size_t h = 1; h <= 16; h *= 2)
        for (std::size_t w = 1; w <= 32; w *= 2)
            for (int trial = 0; trial < 3; ++trial) {
                const std::string dims = fmt("%zux%zu", h, w);
                const auto xv = random_grid(h * w), yv = random_grid(h * w);
                const ComplexGrid fx = fft2d(xv, h, w), fy = fft2d(yv, h, w), d = direct_dft(xv, h, w);
                double dft_err = 0.0, rt_err = 0.0, lin_err = 0.0;
                for (std::size_t i = 0; i < xv.size(); ++i)
                    dft_err = std::max({dft_err, std::abs(fx.real[i] - d.real[i]), std::abs(fx.imag[i] - d.imag[i])});
                t.below(dft_err, tol, "direct DFT " + dims);

                const InverseResult back = ifft2d(fx);
                for (std::size_t i = 0; i < xv.size(); ++i) rt_err = std::max(rt_err, std::abs(back.values[i] - xv[i]));
                t.below(std::max(rt_err, back.max_imag), tol, "round trip " + dims);

                const double ca = rng.normal(), cb = rng.normal();
                std::vector<double> z(xv.size());
                for (std::size_t i = 0; i < z.size(); ++i) z[i] = ca * xv[i] + cb * yv[i];
                const ComplexGrid fz = fft2d(z, h, w);
                for (std::size_t i = 0; i < z.size(); ++i)
                    lin_err = std::max({lin_err, std::abs(fz.real[i] - (ca * fx.real[i] + cb * fy.real[i])),
                                        std::abs(fz.imag[i] - (ca * fx.imag[i] + cb * fy.imag[i]))});
                t.below(lin_err, tol, "linearity " + dims);

                double ex = 0.0, ef = 0.0;
                for (std::size_t i = 0; i < xv.size(); ++i) {
                    ex += xv[i] * xv[i];
                    ef += fx.real[i] * fx.real[i] + fx.imag[i] * fx.imag[i];
                }
                t.below(std::abs(ex - ef / static_cast<double>(h * w)) / ex, tol, "Parseval " + dims);
            }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = t.failed == 0 && secs < 10.0;
    o.detail = t.summary() + fmt("; grids 1x1..16x32; worst error %.2e; %.2f s", t.worst, secs);
    return o;
}

// ---- 3: geometry ---------------------------------------------------------

Outcome geometry(const Options&) {
    const auto t0 = Clock::now();
    Tally t;
    const ProjectionConfig cfg;
    t.expect(pixel_coord({1, 0, 0}, cfg).u == 512.0, "(1,0,0) -> u 512");
    t.expect(std::abs(pixel_coord({0, 1, 0}, cfg).u - 256.0) < 1e-9, "(0,1,0) -> u 256");
    {
        const auto img = project({{{10, 0, 0}}}, cfg).image;
        t.expect(img.valid(4, 512) && img.at(4, 512) == 10.0f && img.valid_count() == 1, "(10,0,0) -> row 4");
    }
    t.expect(project({{{-1, -0.0, 0}}}, cfg).image.valid(4, 0), "u = W wraps to column 0");

    Rng rng(303);
    for (int i = 0; i < 1000; ++i) {
        const double phi = (2 * rng.uniform() - 1) * std::numbers::pi;
        const double u1 = pixel_coord({std::cos(phi), std::sin(phi), 0}, cfg).u;
        const double u2 = pixel_coord({std::cos(phi + 2 * std::numbers::pi), std::sin(phi + 2 * std::numbers::pi), 0}, cfg).u;
        t.expect(std::abs(u1 - u2) < 1e-9, "azimuth wrap");
    }
    for (int i = 0; i < 1000; ++i) {
        const double r1 = 1.0 + 60.0 * rng.uniform(), r2 = r1 + 0.5 + 10.0 * rng.uniform();
        const double phi = (2 * rng.uniform() - 1) * std::numbers::pi;
        const double el = cfg.theta_min + (cfg.theta_max - cfg.theta_min) * rng.uniform();
        const Point3 dir{std::cos(el) * std::cos(phi), std::cos(el) * std::sin(phi), std::sin(el)};
        const Point3 near{r1 * dir.x, r1 * dir.y, r1 * dir.z}, far{r2 * dir.x, r2 * dir.y, r2 * dir.z};
        const PointCloud c{i % 2 ? std::vector<Point3>{near, far} : std::vector<Point3>{far, near}};
        const RangeImage img = project(c, cfg).image;
        bool ok = img.valid_count() == 1;
        for (std::size_t k = 0; k < img.range.size(); ++k)
            if (img.mask[k]) ok &= img.range[k] == static_cast<float>(near.norm());
        t.expect(ok, "nearest return");
    }

    const ProjectionConfig small{32, 256};
    std::size_t clouds = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const PointCloud cloud = flash::testing::random_cloud(200, rng, small);
        const RangeImage img = project(cloud, small).image;
        const PointCloud back = unproject(img, small);
        const RangeImage again = project(back, small).image;
        bool ok = again == img && unproject(again, small).points == back.points && back.size() == img.valid_count();
        // Unprojected points sit on cell-centre rays at the stored range.
        for (const Point3& p : back.points) {
            const PixelCoord pc = pixel_coord(p, small);
            const auto row = static_cast<std::size_t>(pc.v);
            const auto col = static_cast<std::size_t>(pc.u) % small.width;
            ok &= std::abs(pc.v - (row + 0.5)) < 1e-6 && std::abs(std::fmod(pc.u, 1.0) - 0.5) < 1e-6;
            ok &= std::abs(p.norm() - img.at(row, col)) <= 1e-12 * img.at(row, col);
        }
        t.expect(ok, fmt("round trip on cloud %d", trial));
        ++clouds;
    }
    t.expect(unproject(RangeImage(32, 256), small).empty(), "all-invalid image -> empty cloud");

    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = t.failed == 0 && secs < 10.0;
    o.detail = t.summary() + fmt("; %zu random clouds; %.2f s", clouds, secs);
    return o;
}

// ---- 4: metric oracles ---------------------------------------------------

PointCloud random_points(std::size_t n, Rng& rng, double extent) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({extent * (2 * rng.uniform() - 1), extent * (2 * rng.uniform() - 1),
                            0.2 * extent * (2 * rng.uniform() - 1)});
    return c;
}

double brute_nearest(const Point3& q, const PointCloud& c) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : c.points) best = std::min(best, point_distance(q, p));
    return best;
}

using Voxel = std::tuple<long, long, long>;

std::set<Voxel> voxel_set(const PointCloud& c) {
    std::set<Voxel> s;
    for (const auto& p : c.points)
        s.insert({static_cast<long>(std::floor(p.x / 0.1)), static_cast<long>(std::floor(p.y / 0.1)),
                  static_cast<long>(std::floor(p.z / 0.1))});
    return s;
}

Outcome metric_oracles(const Options&) {
    Tally t;
    Rng rng(404);
    double cd_worst = 0.0, vox_worst = 0.0;
    for (int inst = 0; inst < 200; ++inst) {
        const double extent = std::pow(10.0, 2 * rng.uniform() - 0.5);
        PointCloud a = random_points(50 + rng.next_u64() % 50, rng, extent);
        PointCloud b = random_points(50 + rng.next_u64() % 50, rng, extent);
        if (inst % 4 == 0)
            for (auto& p : b.points) p.x += 5 * extent;
        double sa = 0.0, sb = 0.0;
        for (const auto& p : a.points) sa += brute_nearest(p, b);
        for (const auto& p : b.points) sb += brute_nearest(p, a);
        const double oracle = 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
        const double err = std::abs(chamfer(a, b) - oracle);
        cd_worst = std::max(cd_worst, err);
        t.expect(err <= 1e-12, fmt("chamfer instance %d", inst));
    }
    for (int inst = 0; inst < 200; ++inst) {
        PointCloud a = random_points(60, rng, 0.4), b = random_points(50, rng, 0.4);
        const auto sa = voxel_set(a), sb = voxel_set(b);
        std::size_t shared = 0;
        for (const auto& v : sa) shared += sb.count(v);
        const double iou = static_cast<double>(shared) / static_cast<double>(sa.size() + sb.size() - shared);
        const double p = static_cast<double>(shared) / static_cast<double>(sa.size());
        const double r = static_cast<double>(shared) / static_cast<double>(sb.size());
        const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        const VoxelScores s = voxel_scores(a, b);
        const double err = std::max({std::abs(s.iou - iou), std::abs(s.precision - p), std::abs(s.recall - r),
                                     std::abs(s.f1 - f1)});
        vox_worst = std::max(vox_worst, err);
        t.expect(err <= 1e-12, fmt("voxel instance %d", inst));
    }
    const Point3 A{0.05, 0.05, 0.05}, B{0.15, 0.05, 0.05}, C{0.25, 0.05, 0.05};
    const VoxelScores ex = voxel_scores(PointCloud{{A, B}}, PointCloud{{B, C}});
    t.expect(ex.iou == 1.0 / 3.0 && ex.precision == 0.5 && ex.recall == 0.5 && ex.f1 == 0.5, "voxel example");

    Outcome o;
    o.pass = t.failed == 0;
    o.detail = t.summary() +
               fmt("; chamfer worst %.1e, voxel worst %.1e; example IoU %.17g P %.17g R %.17g F1 %.17g", cd_worst,
                   vox_worst, ex.iou, ex.precision, ex.recall, ex.f1);
    return o;
}

// ---- 5: fixpoints --------------------------------------------------------

Outcome fixpoints(const Options&) {
    Tally t;
    Rng rng(505);
    NoGradGuard guard;
    for (int trial = 0; trial < 20; ++trial) {
        FAParams p = random_fa(8, 2, 2, 8, rng);
        for (auto& w : p.gate_weight.mutable_data()) w = rng.normal(0, 0.3);
        p.alpha.mutable_data()[0] = 0.0;
        Tensor x = random_tensor({4, 32, 8}, rng);
        const std::size_t sh = trial % 2, sw = 4 * (trial % 2);
        const Tensor spatial = window_reverse(spatial_attention(window_partition(x, 2, 8, sh, sw), p));
        t.expect(bitwise_equal(fa_forward(x, p, sh, sw), spatial), "alpha = 0 equals the spatial path");
    }
    for (int trial = 0; trial < 20; ++trial) {
        FAParams p = FAParams::init(6, 2, 2, 8, rng);
        Tensor x = random_tensor({8, 64, 6}, rng, -5, 5);
        const Tensor m = ops::reshape(ops::mean_axis(x, 2), {8, 64});
        t.expect(bitwise_equal(frequency_branch(x, p), ops::scale(m, 0.5)), "zero gate gives half the channel mean");
    }
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 4;
        MSFParams p = MSFParams::init(c, c, 1, 3, rng);
        for (Tensor* w : {&p.conv1_w, &p.conv3_w, &p.conv5_w}) {
            fill(*w, 0.0);
            const std::size_t k = w->size(0), centre = (k / 2) * k + k / 2;
            for (std::size_t i = 0; i < c; ++i) w->mutable_data()[(centre * c + i) * c + i] = 1.0;
        }
        for (Tensor* b : {&p.conv1_b, &p.conv3_b, &p.conv5_b}) fill(*b, 0.0);
        fill(p.gen_w, 0.0);
        fill(p.gen_b, 0.7);
        Tensor e = random_tensor({4, 16, c}, rng), d = random_tensor({4, 16, c}, rng);
        MSFTrace trace;
        msf_fuse(e, d, p, &trace);
        bool ok = true;
        for (std::size_t i = 0; i < e.numel(); ++i) ok &= trace.fused.at(i) == e.at(i) + d.at(i);
        for (double w : trace.weights.data()) ok &= w == 1.0 / 3.0;
        t.expect(ok, "uniform weights with delta kernels give the combined input");
    }
    for (int trial = 0; trial < 20; ++trial) {
        CBAMParams p = CBAMParams::init(8, 2, 7, rng);
        for (Tensor* w : {&p.fc1_w, &p.fc1_b, &p.fc2_w, &p.fc2_b, &p.spatial_w, &p.spatial_b}) fill(*w, 0.0);
        Tensor x = random_tensor({4, 16, 8}, rng, -10, 10);
        const Tensor y = cbam(x, p);
        bool ok = true;
        for (std::size_t i = 0; i < x.numel(); ++i) ok &= y.at(i) == 0.25 * x.at(i);
        t.expect(ok, "zero CBAM scales by 0.25");
    }
    Outcome o;
    o.pass = t.failed == 0;
    o.detail = t.summary() + "; all comparisons bitwise";
    return o;
}

// ---- 6: ablation canary --------------------------------------------------

struct Variant {
    const char* name;
    bool fa, msf;
};
constexpr Variant kVariants[] = {{"full", true, true}, {"msf-only", false, true}, {"baseline", false, false}};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome ablation(const Options& opt) {
    const auto t0 = Clock::now();
    SynthConfig sc;  // 64 x 256 high, 16 x 256 low
    const Dataset data = generate_dataset(opt.scenes, opt.scene_seed, sc, thread_count(opt.threads));
    const std::size_t nv = std::size(kVariants), ns = opt.seeds.size();
    std::vector<TrainResult> results(nv * ns);
    const std::size_t workers = std::min(thread_count(opt.threads), results.size());
    parallel_for(results.size(), workers, [&](std::size_t job) {
        const Variant& v = kVariants[job / ns];
        const std::uint64_t seed = opt.seeds[job % ns];
        FlashConfig cfg;
        cfg.enable_fa = v.fa;
        cfg.enable_msf = v.msf;
        cfg.seed = seed;
        TrainConfig tc;
        tc.epochs = opt.epochs;
        tc.seed = seed;
        if (!opt.out_dir.empty()) tc.out_dir = std::filesystem::path(opt.out_dir) / fmt("%s_seed%llu", v.name,
                                                                                         static_cast<unsigned long long>(seed));
        FlashModel model(cfg);
        results[job] = train(model, data, tc);
        std::printf("  %s seed %llu: val L1 %.4f -> %.4f\n", v.name, static_cast<unsigned long long>(seed),
                    results[job].curve.front().val_l1, results[job].curve.back().val_l1);
        std::fflush(stdout);
    });
    std::vector<double> med(nv);
    double worst_ratio = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
        std::vector<double> finals;
        for (std::size_t s = 0; s < ns; ++s) {
            const auto& curve = results[v * ns + s].curve;
            finals.push_back(curve.back().val_l1);
            if (v == 0) worst_ratio = std::max(worst_ratio, curve.back().val_l1 / curve.front().val_l1);
        }
        med[v] = median(finals);
    }
    const double hours = seconds_since(t0) / 3600.0;
    const bool ordered = med[0] <= med[1] && med[1] <= med[2];
    const bool reduced = worst_ratio < 0.3;
    const bool in_time = hours < 2.0;
    Outcome o;
    o.pass = ordered && reduced && in_time;
    o.detail = fmt("median final val L1 full %.4f, msf-only %.4f, baseline %.4f (%s); worst full final/initial %.3f "
                   "(%s 0.3); %zu scenes, %zu epochs, %zu seeds; %.2f h on %zu worker(s) (target < 2 h%s)",
                   med[0], med[1], med[2], ordered ? "ordered" : "NOT ordered", worst_ratio, reduced ? "<" : ">=",
                   opt.scenes, opt.epochs, ns, hours, workers, in_time ? "" : ", missed");
    return o;
}

// ---- 7: MC dropout -------------------------------------------------------

Outcome mc_protocol(const Options& opt) {
    Tally t;
    FlashConfig cfg;
    FlashModel model(cfg);
    const Dataset data = generate_dataset(1, 77, SynthConfig{});
    const Tensor x = model_input(data.train[0].low);
    Tensor single;
    {
        NoGradGuard guard;
        single = model.forward(x);
    }
    McOptions zero;
    zero.dropout = 0.0;
    zero.threads = thread_count(opt.threads);
    const McResult r0 = mc_dropout_infer(model, x, zero);
    t.expect(bitwise_equal(r0.mean, single), "p = 0 mean equals the single pass");

    McOptions mc;  // 20 samples, batches of 8, p = 0.2, timed on one thread
    mc.threads = 1;
    const McResult r = mc_dropout_infer(model, x, mc);
    const double max_std = *std::max_element(r.std.begin(), r.std.end());
    t.expect(max_std > 0.0, "p = 0.2 gives positive spread");

    const double single_ms = time_single_pass(model, x);
    const double ratio = r.latency_ms / single_ms;
    const double required = 0.8 * static_cast<double>(mc.samples) / static_cast<double>(mc.batch);
    t.expect(ratio >= required, "latency ratio");
    Outcome o;
    o.pass = t.failed == 0;
    o.detail = t.summary() + fmt("; max std %.3g; MC %.1f ms vs single %.1f ms = %.2fx (need >= %.2fx); %zu worker(s)",
                                 max_std, r.latency_ms, single_ms, ratio, required, mc.threads);
    return o;
}

// ---- 8: schedule ---------------------------------------------------------

Outcome schedule(const Options&) {
    const LrSchedule s = LrSchedule::full_scale();
    const double warm = lr_at(s, s.warmup_epochs), peak1 = lr_at(s, s.warmup_epochs + s.cycle_length);
    Outcome o;
    o.pass = warm == 5e-4 && peak1 == 3.5e-4;
    o.detail = fmt("lr(%g) = %.17g, lr(%g) = %.17g", s.warmup_epochs, warm, s.warmup_epochs + s.cycle_length, peak1);
    return o;
}

// ---- 9: determinism ------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Trains, reloads the final checkpoint and evaluates the validation scenes.
std::string pipeline(const std::filesystem::path& dir) {
    SynthConfig sc;
    sc.projection = ProjectionConfig{32, 32};
    const Dataset data = generate_dataset(20, 11, sc, 2);
    FlashConfig cfg = FlashConfig::tiny();
    cfg.dropout = 0.1;
    cfg.seed = 5;
    FlashModel model(cfg);
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 5;
    tc.checkpoint_every = 1;
    tc.out_dir = dir;
    train(model, data, tc);

    FlashModel reloaded(cfg);
    ParameterList params = reloaded.parameters();
    restore_parameters(params, dir / "model.flsh");
    std::vector<MetricReport> reports;
    for (const auto& s : data.val) {
        NoGradGuard guard;
        const RangeImage pred = prediction_to_image(reloaded.forward(model_input(s.low)), sc.projection.r_min,
                                                    sc.projection.r_max);
        reports.push_back(evaluate(pred, s.high, sc.projection));
    }
    McOptions mc;
    mc.samples = 4;
    mc.batch = 2;
    mc.seed = 3;
    const McResult r = mc_dropout_infer(reloaded, model_input(data.val[0].low), mc);
    std::string out = report_json(average_reports(reports));
    for (double v : r.std) out += fmt("%a\n", v);
    return out;
}

Outcome determinism(const Options&) {
    flash::testing::TempDir dir;
    const std::string ra = pipeline(dir / "a"), rb = pipeline(dir / "b");
    Tally t;
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
        const auto name = entry.path().filename();
        t.expect(std::filesystem::exists(dir / "b" / name) && slurp(entry.path()) == slurp(dir / "b" / name),
                 name.string());
        ++files;
    }
    t.expect(files >= 5, "artefact count");
    t.expect(ra == rb, "reports");
    Outcome o;
    o.pass = t.failed == 0;
    o.detail = t.summary() + fmt("; %zu artefacts and the metric report compared byte for byte", files);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> selected;
    Options opt;
    app.add_option("-c,--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
    app.add_option("--threads", opt.threads, "Worker threads (0: FLASH_THREADS or hardware)");
    app.add_option("--scenes", opt.scenes, "Criterion 6: synthetic scenes")->capture_default_str();
    app.add_option("--epochs", opt.epochs, "Criterion 6: training epochs")->capture_default_str();
    app.add_option("--seeds", opt.seeds, "Criterion 6: training seeds")->capture_default_str();
    app.add_option("--out-dir", opt.out_dir, "Criterion 6: directory for per-run loss curves");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Outcome(const Options&)>>> criteria{
        {"gradient suite", gradients},   {"FFT suite", fft},
        {"geometry suite", geometry},    {"metric-oracle suite", metric_oracles},
        {"equation fixpoints", fixpoints}, {"ablation-trend canary", ablation},
        {"MC-dropout protocol", mc_protocol}, {"schedule fixpoints", schedule},
        {"determinism", determinism}};
    if (selected.empty())
        for (int i = 1; i <= 9; ++i) selected.push_back(i);

    bool all = true;
    for (int id : selected) {
        const auto& [name, run] = criteria[id - 1];
        Outcome o;
        try {
            o = run(opt);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all &= o.pass;
        std::printf("criterion %d %s: %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
