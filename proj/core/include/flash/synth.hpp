#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flash/rangeimg.hpp"

namespace flash {

// Upright box resting on the ground, rotated by `yaw` about +z.
struct Box {
    double cx = 0.0, cy = 0.0;
    double half_length = 1.0, half_width = 1.0;
    double height = 1.0;
    double yaw = 0.0;
};

// Vertical cylinder resting on the ground.
struct Cylinder {
    double cx = 0.0, cy = 0.0;
    double radius = 0.5;
    double height = 1.0;
};

// Analytic scene seen from a sensor at the origin. The ground is the plane
// z = ground_z (below the sensor).
struct SyntheticScene {
    double ground_z = -1.73;
    std::vector<Box> boxes;
    std::vector<Cylinder> cylinders;
    std::uint64_t seed = 0;
};

struct SynthConfig {
    ProjectionConfig projection{64, 256};
    std::size_t downsample = 4;
    double sensor_height = 1.73;
    std::size_t min_boxes = 3, max_boxes = 8;
    std::size_t min_cylinders = 2, max_cylinders = 6;
    double min_distance = 4.0;   // object centres, metres from the sensor
    double max_distance = 50.0;

    void validate() const;
};

SyntheticScene generate_scene(std::uint64_t seed, const SynthConfig& cfg);

// Distance along the unit ray `dir` from the origin to the nearest surface;
// +inf on a miss.
double cast_ray(const SyntheticScene& scene, const Point3& dir);
double intersect_ground(double ground_z, const Point3& dir);
double intersect_box(const Box& box, double ground_z, const Point3& dir);
double intersect_cylinder(const Cylinder& cyl, double ground_z, const Point3& dir);

// Casts one ray through every cell centre; hits outside [r_min, r_max] stay invalid.
RangeImage render(const SyntheticScene& scene, const ProjectionConfig& proj);

struct SamplePair {
    RangeImage high;  // metres
    RangeImage low;   // every `downsample`-th row of `high`
};

SamplePair make_pair(const SyntheticScene& scene, const SynthConfig& cfg);

struct Dataset {
    std::vector<SamplePair> train;
    std::vector<SamplePair> val;
};

// Scene i uses seed split(i) of `seed`; every tenth scene (i % 10 == 9)
// goes to validation. Generation runs on `threads` workers.
Dataset generate_dataset(std::size_t count, std::uint64_t seed, const SynthConfig& cfg, std::size_t threads = 1);

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);
bool is_validation_scene(std::size_t index);

}  // namespace flash
