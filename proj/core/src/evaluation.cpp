#include "flash/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "flash/parallel.hpp"

namespace flash {

double mae(const RangeImage& pred, const RangeImage& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("mae: image sizes differ");
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.range.size(); ++i) {
        if (!gt.mask[i]) continue;
        total += std::abs(static_cast<double>(pred.range[i]) - static_cast<double>(gt.range[i]));
        ++n;
    }
    if (n == 0) throw std::invalid_argument("mae: ground truth has no valid cell");
    return total / static_cast<double>(n);
}

double point_distance(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::size_t GridIndex::KeyHash::operator()(const Key& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
}

GridIndex::GridIndex(const PointCloud& cloud, double cell) : cloud_(&cloud) {
    if (cloud.empty()) throw std::invalid_argument("GridIndex: empty cloud");
    Point3 lo = cloud.points.front(), hi = lo;
    for (const auto& p : cloud.points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const double ext[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
    const double max_ext = std::max({ext[0], ext[1], ext[2], 1e-9});
    if (cell <= 0.0) {
        double vol = 1.0;
        for (double e : ext) vol *= std::max(e, 0.01 * max_ext);
        cell = 2.0 * std::cbrt(vol / static_cast<double>(cloud.size()));
    }
    cell_ = std::max(cell, max_ext * 1e-6);
    max_shell_ = static_cast<std::int64_t>(std::ceil(max_ext / cell_)) + 1;
    max_shell_ = std::min<std::int64_t>(max_shell_, 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) cells_[key_of(cloud.points[i])].push_back(i);
}

GridIndex::Key GridIndex::key_of(const Point3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / cell_)), static_cast<std::int64_t>(std::floor(p.y / cell_)),
            static_cast<std::int64_t>(std::floor(p.z / cell_))};
}

GridIndex::Hit GridIndex::brute_force(const Point3& q) const {
    Hit best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < cloud_->size(); ++i) {
        const double d = point_distance(q, cloud_->points[i]);
        if (d < best.distance) best = {i, d};
    }
    return best;
}

GridIndex::Hit GridIndex::nearest(const Point3& q) const {
    const Key c = key_of(q);
    Hit best{0, std::numeric_limits<double>::infinity()};
    auto visit = [&](std::int64_t dx, std::int64_t dy, std::int64_t dz) {
        auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
        if (it == cells_.end()) return;
        for (std::size_t i : it->second) {
            const double d = point_distance(q, cloud_->points[i]);
            if (d < best.distance || (d == best.distance && i < best.index)) best = {i, d};
        }
    };
    for (std::int64_t k = 0;; ++k) {
        if (k > max_shell_) return brute_force(q);
        for (std::int64_t dx = -k; dx <= k; ++dx)
            for (std::int64_t dy = -k; dy <= k; ++dy) {
                if (std::abs(dx) == k || std::abs(dy) == k) {
                    for (std::int64_t dz = -k; dz <= k; ++dz) visit(dx, dy, dz);
                } else {
                    visit(dx, dy, -k);
                    if (k) visit(dx, dy, k);
                }
            }
        // Every unvisited point is more than k cells away along some axis.
        if (best.distance <= static_cast<double>(k) * cell_) return best;
    }
}

namespace {

double directed_mean(const PointCloud& from, const PointCloud& to, const ChamferOptions& opts) {
    const GridIndex index(to);
    double total = 0.0;
    for (const auto& p : from.points) {
        const double d = index.nearest(p).distance;
        total += opts.squared ? d * d : d;
    }
    return total / static_cast<double>(from.size());
}

struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
        h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

using VoxelSet = std::unordered_set<VoxelKey, VoxelHash>;

VoxelSet voxelize(const PointCloud& c) {
    VoxelSet s;
    for (const auto& p : c.points)
        s.insert({static_cast<std::int64_t>(std::floor(p.x / kVoxelSize)),
                  static_cast<std::int64_t>(std::floor(p.y / kVoxelSize)),
                  static_cast<std::int64_t>(std::floor(p.z / kVoxelSize))});
    return s;
}

double ratio(std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

// Points of cells whose stored range lies in [lo, hi).
PointCloud unproject_bin(const RangeImage& img, const ProjectionConfig& proj, const DistanceBin& b) {
    RangeImage kept = img;
    for (std::size_t i = 0; i < kept.range.size(); ++i)
        if (kept.mask[i] && !(kept.range[i] >= b.lo && kept.range[i] < b.hi)) {
            kept.mask[i] = 0;
            kept.range[i] = 0.0f;
        }
    return unproject(kept, proj);
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b, const ChamferOptions& opts) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point cloud");
    return 0.5 * (directed_mean(a, b, opts) + directed_mean(b, a, opts));
}

VoxelScores voxel_scores(const PointCloud& pred, const PointCloud& gt) {
    const VoxelSet p = voxelize(pred), g = voxelize(gt);
    VoxelScores s;
    s.pred_voxels = p.size();
    s.gt_voxels = g.size();
    for (const auto& k : p) s.shared_voxels += g.count(k);
    s.iou = ratio(s.shared_voxels, s.pred_voxels + s.gt_voxels - s.shared_voxels);
    s.precision = ratio(s.shared_voxels, s.pred_voxels);
    s.recall = ratio(s.shared_voxels, s.gt_voxels);
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

std::vector<DistanceBin> default_bins() { return {{0.0, 30.0}, {30.0, 60.0}}; }

std::vector<DistanceBin> parse_bins(const std::string& text) {
    std::vector<DistanceBin> bins;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("bins: expected lo:hi, got '" + item + "'");
        DistanceBin b;
        try {
            std::size_t used = 0;
            b.lo = std::stod(item.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("");
            const std::string rest = item.substr(colon + 1);
            b.hi = std::stod(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw std::invalid_argument("bins: malformed bin '" + item + "'");
        }
        if (!(b.lo >= 0.0 && b.hi > b.lo)) throw std::invalid_argument("bins: require 0 <= lo < hi in '" + item + "'");
        bins.push_back(b);
    }
    if (bins.empty()) throw std::invalid_argument("bins: no bins given");
    return bins;
}

std::vector<BinReport> binned_eval(const RangeImage& pred, const RangeImage& gt, const ProjectionConfig& proj,
                                   const std::vector<DistanceBin>& bins, const ChamferOptions& opts) {
    if (pred.height != gt.height || pred.width != gt.width) throw std::invalid_argument("binned_eval: image sizes differ");
    std::vector<BinReport> out;
    for (const auto& b : bins) {
        BinReport r;
        r.bin = b;
        const PointCloud pb = unproject_bin(pred, proj, b), gb = unproject_bin(gt, proj, b);
        r.pred_points = pb.size();
        r.gt_points = gb.size();
        if (!pb.empty() && !gb.empty()) {
            BinMetrics m;
            double total = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < gt.range.size(); ++i) {
                if (!gt.mask[i] || !(gt.range[i] >= b.lo && gt.range[i] < b.hi)) continue;
                total += std::abs(static_cast<double>(pred.range[i]) - static_cast<double>(gt.range[i]));
                ++n;
            }
            m.mae_m = n ? total / static_cast<double>(n) : 0.0;
            m.cd = chamfer(pb, gb, opts);
            m.voxels = voxel_scores(pb, gb);
            r.metrics = m;
        }
        out.push_back(r);
    }
    return out;
}

MetricReport evaluate(const RangeImage& pred, const RangeImage& gt, const ProjectionConfig& proj,
                      const std::vector<DistanceBin>& bins, const ChamferOptions& opts) {
    MetricReport r;
    r.mae_m = mae(pred, gt);
    r.mae_log = mae(log_transform(pred), log_transform(gt));
    const PointCloud pc = unproject(pred, proj), gc = unproject(gt, proj);
    r.cd = (pc.empty() || gc.empty()) ? std::numeric_limits<double>::quiet_NaN() : chamfer(pc, gc, opts);
    r.voxels = voxel_scores(pc, gc);
    r.bins = binned_eval(pred, gt, proj, bins, opts);
    return r;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
    MetricReport out;
    const double n = static_cast<double>(reports.size());
    auto add_voxels = [](VoxelScores& acc, const VoxelScores& v) {
        acc.iou += v.iou, acc.precision += v.precision, acc.recall += v.recall, acc.f1 += v.f1;
        acc.pred_voxels += v.pred_voxels, acc.gt_voxels += v.gt_voxels, acc.shared_voxels += v.shared_voxels;
    };
    auto div_voxels = [](VoxelScores& acc, double d) { acc.iou /= d, acc.precision /= d, acc.recall /= d, acc.f1 /= d; };
    out.bins = reports.front().bins;
    std::vector<std::size_t> present(out.bins.size(), 0);
    for (auto& b : out.bins) b.pred_points = b.gt_points = 0, b.metrics.reset();
    for (const auto& r : reports) {
        if (r.bins.size() != out.bins.size()) throw std::invalid_argument("average_reports: bin layouts differ");
        out.mae_log += r.mae_log;
        out.mae_m += r.mae_m;
        out.cd += r.cd;
        add_voxels(out.voxels, r.voxels);
        for (std::size_t i = 0; i < r.bins.size(); ++i) {
            auto& ob = out.bins[i];
            ob.pred_points += r.bins[i].pred_points;
            ob.gt_points += r.bins[i].gt_points;
            if (!r.bins[i].metrics) continue;
            if (!ob.metrics) ob.metrics = BinMetrics{};
            ob.metrics->mae_m += r.bins[i].metrics->mae_m;
            ob.metrics->cd += r.bins[i].metrics->cd;
            add_voxels(ob.metrics->voxels, r.bins[i].metrics->voxels);
            ++present[i];
        }
    }
    out.mae_log /= n;
    out.mae_m /= n;
    out.cd /= n;
    div_voxels(out.voxels, n);
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
        if (!out.bins[i].metrics) continue;
        const double k = static_cast<double>(present[i]);
        out.bins[i].metrics->mae_m /= k;
        out.bins[i].metrics->cd /= k;
        div_voxels(out.bins[i].metrics->voxels, k);
    }
    return out;
}

McResult mc_dropout_infer(const FlashModel& model, const Tensor& input, const McOptions& opts) {
    if (opts.samples == 0 || opts.batch == 0) throw std::invalid_argument("mc_dropout: samples and batch must be positive");
    if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) throw std::invalid_argument("mc_dropout: p must lie in [0, 1)");
    const auto start = std::chrono::steady_clock::now();
    const Rng root(opts.seed);
    McResult r;
    std::vector<double> mean, m2;
    std::size_t seen = 0;
    for (std::size_t first = 0; first < opts.samples; first += opts.batch) {
        const std::size_t count = std::min(opts.batch, opts.samples - first);
        std::vector<Tensor> outs(count);
        parallel_for(count, opts.threads, [&](std::size_t j) {
            NoGradGuard guard;
            Rng rng = root.split(first + j);
            ForwardOptions fo;
            fo.stochastic = true;
            fo.dropout = opts.dropout;
            fo.rng = &rng;
            outs[j] = model.forward(input, fo);
        });
        for (const Tensor& t : outs) {
            auto x = t.data();
            if (mean.empty()) {
                r.mean = Tensor(t.shape());
                mean.assign(x.size(), 0.0);
                m2.assign(x.size(), 0.0);
            }
            ++seen;
            const double k = static_cast<double>(seen);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double delta = x[i] - mean[i];
                mean[i] += delta / k;
                m2[i] += delta * (x[i] - mean[i]);
            }
        }
    }
    std::copy(mean.begin(), mean.end(), r.mean.mutable_data().begin());
    r.std.resize(m2.size());
    for (std::size_t i = 0; i < m2.size(); ++i) r.std[i] = std::sqrt(m2[i] / static_cast<double>(seen));
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

double time_single_pass(const FlashModel& model, const Tensor& input, std::size_t warmup, std::size_t reps) {
    if (reps == 0) throw std::invalid_argument("time_single_pass: reps must be positive");
    NoGradGuard guard;
    for (std::size_t i = 0; i < warmup; ++i) model.forward(input);
    std::vector<double> ms(reps);
    for (auto& m : ms) {
        const auto t0 = std::chrono::steady_clock::now();
        model.forward(input);
        m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    return reps % 2 ? ms[reps / 2] : 0.5 * (ms[reps / 2 - 1] + ms[reps / 2]);
}

}  // namespace flash
