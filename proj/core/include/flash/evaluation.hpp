#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flash/network.hpp"
#include "flash/rangeimg.hpp"

namespace flash {

// Mean |pred - gt| over cells valid in gt, on the stored values. Throws on a
// size mismatch or when gt has no valid cell.
double mae(const RangeImage& pred, const RangeImage& gt);

struct ChamferOptions {
    bool squared = false;  // average squared rather than plain distances
};

// Exact nearest-neighbour queries through a uniform 3D hash grid.
class GridIndex {
   public:
    // Keeps a reference to `cloud`. cell <= 0: chosen from point density.
    explicit GridIndex(const PointCloud& cloud, double cell = 0.0);

    struct Hit {
        std::size_t index = 0;
        double distance = 0.0;
    };
    Hit nearest(const Point3& q) const;
    double cell_size() const { return cell_; }

   private:
    struct Key {
        std::int64_t x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const;
    };
    Key key_of(const Point3& p) const;
    Hit brute_force(const Point3& q) const;

    const PointCloud* cloud_;
    double cell_ = 1.0;
    std::int64_t max_shell_ = 0;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

double point_distance(const Point3& a, const Point3& b);

// Symmetric mean nearest-neighbour distance, in metres. Throws on an empty cloud.
double chamfer(const PointCloud& a, const PointCloud& b, const ChamferOptions& opts = {});

constexpr double kVoxelSize = 0.1;

struct VoxelScores {
    double iou = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t pred_voxels = 0, gt_voxels = 0, shared_voxels = 0;
};

// Occupancy at 0.1 m: index = floor(coord / 0.1). Ratios with a zero
// denominator are reported as 0.
VoxelScores voxel_scores(const PointCloud& pred, const PointCloud& gt);

struct DistanceBin {
    double lo = 0.0, hi = 0.0;  // [lo, hi) metres
};

std::vector<DistanceBin> default_bins();
// "0:30,30:60"
std::vector<DistanceBin> parse_bins(const std::string& text);

struct BinMetrics {
    double mae_m = 0.0;  // over gt cells in the bin, metres
    double cd = 0.0;
    VoxelScores voxels;
};

struct BinReport {
    DistanceBin bin;
    std::size_t pred_points = 0, gt_points = 0;
    std::optional<BinMetrics> metrics;  // absent when either side is empty
};

struct MetricReport {
    double mae_log = 0.0;
    double mae_m = 0.0;
    double cd = 0.0;
    VoxelScores voxels;
    std::vector<BinReport> bins;
    std::optional<double> single_pass_ms;
    std::optional<double> mc_dropout_ms;
};

std::vector<BinReport> binned_eval(const RangeImage& pred, const RangeImage& gt, const ProjectionConfig& proj,
                                   const std::vector<DistanceBin>& bins = default_bins(),
                                   const ChamferOptions& opts = {});

// pred and gt in metres.
MetricReport evaluate(const RangeImage& pred, const RangeImage& gt, const ProjectionConfig& proj,
                      const std::vector<DistanceBin>& bins = default_bins(), const ChamferOptions& opts = {});

// Sums per-frame reports into their mean; a bin's metrics are averaged over
// the frames where they are present.
MetricReport average_reports(const std::vector<MetricReport>& reports);

std::string report_json(const MetricReport& r);
std::string report_table(const MetricReport& r);

struct McOptions {
    std::size_t samples = 20;
    std::size_t batch = 8;
    double dropout = 0.2;
    std::uint64_t seed = 0;
    std::size_t threads = 1;  // workers within a batch
};

struct McResult {
    Tensor mean;             // [4H_l, W]
    std::vector<double> std; // per pixel, population
    double latency_ms = 0.0;
};

// Stochastic passes with dropout active. Pass i draws from split(i) of the
// seed; results are merged in pass order, so output is independent of threads.
McResult mc_dropout_infer(const FlashModel& model, const Tensor& input, const McOptions& opts = {});

// Median wall-clock of deterministic forward passes after `warmup` untimed runs.
double time_single_pass(const FlashModel& model, const Tensor& input, std::size_t warmup = 3, std::size_t reps = 20);

}  // namespace flash
