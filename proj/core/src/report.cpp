#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "flash/evaluation.hpp"

namespace flash {

namespace {

nlohmann::ordered_json number(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json voxels_json(const VoxelScores& v) {
    return {{"iou", number(v.iou)},
            {"precision", number(v.precision)},
            {"recall", number(v.recall)},
            {"f1", number(v.f1)}};
}

std::string fmt(const char* spec, double v) {
    if (!std::isfinite(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string bin_label(const DistanceBin& b) { return fmt("%g", b.lo) + "-" + fmt("%g", b.hi) + "m"; }

}  // namespace

std::string report_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["mae_log"] = number(r.mae_log);
    j["mae_m"] = number(r.mae_m);
    j["cd_m"] = number(r.cd);
    j["voxel"] = voxels_json(r.voxels);
    auto bins = nlohmann::ordered_json::array();
    for (const auto& b : r.bins) {
        nlohmann::ordered_json e;
        e["lo"] = b.bin.lo;
        e["hi"] = b.bin.hi;
        e["pred_points"] = b.pred_points;
        e["gt_points"] = b.gt_points;
        if (b.metrics) {
            e["mae_m"] = number(b.metrics->mae_m);
            e["cd_m"] = number(b.metrics->cd);
            e["voxel"] = voxels_json(b.metrics->voxels);
        } else {
            e["metrics"] = nullptr;
        }
        bins.push_back(std::move(e));
    }
    j["bins"] = std::move(bins);
    if (r.single_pass_ms) j["single_pass_ms"] = *r.single_pass_ms;
    if (r.mc_dropout_ms) j["mc_dropout_ms"] = *r.mc_dropout_ms;
    return j.dump(2) + "\n";
}

std::string report_table(const MetricReport& r) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %8s %8s %8s %8s\n", "range", "MAE(log)", "MAE(m)", "CD(m)",
                  "IoU", "P", "R", "F1");
    out += line;
    std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %8s %8s %8s %8s\n", "all", fmt("%.4f", r.mae_log).c_str(),
                  fmt("%.4f", r.mae_m).c_str(), fmt("%.4f", r.cd).c_str(), fmt("%.4f", r.voxels.iou).c_str(),
                  fmt("%.4f", r.voxels.precision).c_str(), fmt("%.4f", r.voxels.recall).c_str(),
                  fmt("%.4f", r.voxels.f1).c_str());
    out += line;
    for (const auto& b : r.bins) {
        if (b.metrics) {
            const auto& m = *b.metrics;
            std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %8s %8s %8s %8s\n", bin_label(b.bin).c_str(), "-",
                          fmt("%.4f", m.mae_m).c_str(), fmt("%.4f", m.cd).c_str(), fmt("%.4f", m.voxels.iou).c_str(),
                          fmt("%.4f", m.voxels.precision).c_str(), fmt("%.4f", m.voxels.recall).c_str(),
                          fmt("%.4f", m.voxels.f1).c_str());
        } else {
            std::snprintf(line, sizeof line, "%-12s %10s\n", bin_label(b.bin).c_str(), "(absent)");
        }
        out += line;
    }
    if (r.single_pass_ms) out += "single-pass latency: " + fmt("%.2f", *r.single_pass_ms) + " ms\n";
    if (r.mc_dropout_ms) out += "mc-dropout latency:  " + fmt("%.2f", *r.mc_dropout_ms) + " ms\n";
    return out;
}

}  // namespace flash
