#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <vector>

namespace flash {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double norm() const;
    friend bool operator==(const Point3&, const Point3&) = default;
};

struct PointCloud {
    std::vector<Point3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Sensor geometry for spherical projection. Defaults follow a 64-beam
// HDL-64E-like sensor (+2.0 / -24.8 degree vertical field of view).
struct ProjectionConfig {
    std::size_t height = 64;
    std::size_t width = 1024;
    double theta_max = deg_to_rad(2.0);
    double theta_min = deg_to_rad(-24.8);
    double r_min = 0.0;
    double r_max = 80.0;

    // Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

// Range grid with an explicit validity mask. Ranges are single precision,
// matching the on-disk format. Invalid cells hold 0.
struct RangeImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> range;
    std::vector<std::uint8_t> mask;

    RangeImage() = default;
    RangeImage(std::size_t h, std::size_t w) : height(h), width(w), range(h * w, 0.0f), mask(h * w, 0) {}

    float at(std::size_t row, std::size_t col) const { return range[row * width + col]; }
    bool valid(std::size_t row, std::size_t col) const { return mask[row * width + col] != 0; }
    void set(std::size_t row, std::size_t col, float r) {
        range[row * width + col] = r;
        mask[row * width + col] = 1;
    }
    std::size_t valid_count() const;

    friend bool operator==(const RangeImage&, const RangeImage&) = default;
};

// Continuous image coordinates of a point before flooring.
struct PixelCoord {
    double u = 0.0;  // column, may lie outside [0, W) before wrapping
    double v = 0.0;  // row
};

PixelCoord pixel_coord(const Point3& p, const ProjectionConfig& cfg);

// Unit ray through the centre of cell (row, col).
Point3 cell_ray(std::size_t row, std::size_t col, const ProjectionConfig& cfg);

struct ProjectionResult {
    RangeImage image;
    std::size_t dropped = 0;  // out of vertical FOV or range bounds
};

// Spherical projection; colliding points keep the nearest return.
ProjectionResult project(const PointCloud& cloud, const ProjectionConfig& cfg);
PointCloud unproject(const RangeImage& img, const ProjectionConfig& cfg);

// r -> ln(r + 1) on valid cells. Throws on a negative valid range.
RangeImage log_transform(const RangeImage& img);
// y -> exp(y) - 1 on valid cells.
RangeImage inverse_log_transform(const RangeImage& img);

// Keeps rows 0, factor, 2*factor, ...; H must be divisible by factor.
RangeImage downsample_rows(const RangeImage& img, std::size_t factor);

// File I/O. Velodyne .bin: packed little-endian float32 (x, y, z, intensity).
PointCloud read_velodyne_bin(const std::filesystem::path& path);
void write_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path);

// FRIM: "FRIM" | u16 version = 1 | u32 H | u32 W | f32 range[H*W] | u8 mask[H*W]
RangeImage read_rangeimage(const std::filesystem::path& path);
void write_rangeimage(const RangeImage& img, const std::filesystem::path& path);

// ASCII PLY with x y z vertices only.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_ply(const std::filesystem::path& path);

}  // namespace flash
