#include "flash/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "flash/parallel.hpp"
#include "flash/tensor.hpp"

namespace flash {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-12;

// Uniform in [lo, hi).
double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::size_t uniform_count(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.next_u64() % (hi - lo + 1));
}

}  // namespace

void SynthConfig::validate() const {
    projection.validate();
    if (downsample == 0 || projection.height % downsample != 0)
        throw std::invalid_argument("SynthConfig: height not divisible by downsample factor");
    if (!(sensor_height > 0.0)) throw std::invalid_argument("SynthConfig: sensor height must be positive");
    if (min_boxes > max_boxes || min_cylinders > max_cylinders)
        throw std::invalid_argument("SynthConfig: object count bounds inverted");
    if (!(min_distance > 3.0 && min_distance <= max_distance))
        throw std::invalid_argument("SynthConfig: object distance must satisfy 3 < min <= max");
    if (max_distance + 3.0 > projection.r_max)
        throw std::invalid_argument("SynthConfig: objects must lie within r_max");
}

SyntheticScene generate_scene(std::uint64_t seed, const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    SyntheticScene s;
    s.seed = seed;
    s.ground_z = -cfg.sensor_height;
    auto place = [&](double& cx, double& cy) {
        const double r = uniform(rng, cfg.min_distance, cfg.max_distance);
        const double a = uniform(rng, -std::numbers::pi, std::numbers::pi);
        cx = r * std::cos(a);
        cy = r * std::sin(a);
    };
    const std::size_t nb = uniform_count(rng, cfg.min_boxes, cfg.max_boxes);
    for (std::size_t i = 0; i < nb; ++i) {
        Box b;
        place(b.cx, b.cy);
        b.half_length = uniform(rng, 0.5, 2.5);
        b.half_width = uniform(rng, 0.4, 1.2);
        b.height = uniform(rng, 0.8, 3.0);
        b.yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
        s.boxes.push_back(b);
    }
    const std::size_t nc = uniform_count(rng, cfg.min_cylinders, cfg.max_cylinders);
    for (std::size_t i = 0; i < nc; ++i) {
        Cylinder c;
        place(c.cx, c.cy);
        c.radius = uniform(rng, 0.1, 0.6);
        c.height = uniform(rng, 1.0, 5.0);
        s.cylinders.push_back(c);
    }
    return s;
}

double intersect_ground(double ground_z, const Point3& dir) {
    if (dir.z >= -kEps) return kInf;
    return ground_z / dir.z;
}

double intersect_box(const Box& box, double ground_z, const Point3& dir) {
    // Ray in the box frame: origin o, direction d.
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double ox = -box.cx, oy = -box.cy;
    const double o[3] = {c * ox + s * oy, -s * ox + c * oy, -ground_z};
    const double d[3] = {c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
    const double lo[3] = {-box.half_length, -box.half_width, 0.0};
    const double hi[3] = {box.half_length, box.half_width, box.height};
    double t0 = 0.0, t1 = kInf;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < kEps) {
            if (o[a] < lo[a] || o[a] > hi[a]) return kInf;
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return kInf;
    }
    return t0 > 0.0 ? t0 : kInf;
}

double intersect_cylinder(const Cylinder& cyl, double ground_z, const Point3& dir) {
    const double ox = -cyl.cx, oy = -cyl.cy;
    const double top = ground_z + cyl.height;
    double best = kInf;
    const double a = dir.x * dir.x + dir.y * dir.y;
    if (a > kEps) {
        const double b = ox * dir.x + oy * dir.y;
        const double cc = ox * ox + oy * oy - cyl.radius * cyl.radius;
        const double disc = b * b - a * cc;
        if (disc >= 0.0) {
            const double t = (-b - std::sqrt(disc)) / a;
            const double z = t * dir.z;
            if (t > 0.0 && z >= ground_z && z <= top) best = t;
        }
    }
    if (std::abs(dir.z) > kEps) {
        const double t = top / dir.z;
        const double px = t * dir.x + ox, py = t * dir.y + oy;
        if (t > 0.0 && px * px + py * py <= cyl.radius * cyl.radius) best = std::min(best, t);
    }
    return best;
}

double cast_ray(const SyntheticScene& scene, const Point3& dir) {
    double t = intersect_ground(scene.ground_z, dir);
    for (const auto& b : scene.boxes) t = std::min(t, intersect_box(b, scene.ground_z, dir));
    for (const auto& c : scene.cylinders) t = std::min(t, intersect_cylinder(c, scene.ground_z, dir));
    return t;
}

RangeImage render(const SyntheticScene& scene, const ProjectionConfig& proj) {
    proj.validate();
    RangeImage img(proj.height, proj.width);
    for (std::size_t r = 0; r < proj.height; ++r)
        for (std::size_t c = 0; c < proj.width; ++c) {
            const double t = cast_ray(scene, cell_ray(r, c, proj));
            if (t >= proj.r_min && t <= proj.r_max) img.set(r, c, static_cast<float>(t));
        }
    return img;
}

SamplePair make_pair(const SyntheticScene& scene, const SynthConfig& cfg) {
    SamplePair p;
    p.high = render(scene, cfg.projection);
    p.low = downsample_rows(p.high, cfg.downsample);
    return p;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) { return Rng(seed).split(index).seed(); }

bool is_validation_scene(std::size_t index) { return index % 10 == 9; }

Dataset generate_dataset(std::size_t count, std::uint64_t seed, const SynthConfig& cfg, std::size_t threads) {
    cfg.validate();
    std::vector<SamplePair> all(count);
    parallel_for(count, threads, [&](std::size_t i) { all[i] = make_pair(generate_scene(scene_seed(seed, i), cfg), cfg); });
    Dataset d;
    for (std::size_t i = 0; i < count; ++i) (is_validation_scene(i) ? d.val : d.train).push_back(std::move(all[i]));
    return d;
}

}  // namespace flash
