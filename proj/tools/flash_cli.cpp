// flash: command-line front end for range-image super-resolution.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flash/checkpoint.hpp"
#include "flash/config_file.hpp"
#include "flash/evaluation.hpp"
#include "flash/network.hpp"
#include "flash/parallel.hpp"
#include "flash/rangeimg.hpp"
#include "flash/svg.hpp"
#include "flash/synth.hpp"
#include "flash/train.hpp"

namespace fs = std::filesystem;
using namespace flash;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// "64x1024"
std::pair<std::size_t, std::size_t> parse_dims(const std::string& s) {
    static const std::regex re(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw UsageError("--dims expects HxW, got '" + s + "'");
    const std::size_t h = std::stoul(m[1]), w = std::stoul(m[2]);
    if (!h || !w) throw UsageError("--dims must be positive");
    return {h, w};
}

// "up:down" in degrees, e.g. "2:-24.8"
std::pair<double, double> parse_fov(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw UsageError("--fov expects up:down in degrees, got '" + s + "'");
    try {
        return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
    } catch (const std::exception&) {
        throw UsageError("--fov expects up:down in degrees, got '" + s + "'");
    }
}

ProjectionConfig make_projection(const std::string& dims, const std::string& fov, double r_max) {
    ProjectionConfig p;
    std::tie(p.height, p.width) = parse_dims(dims);
    const auto [up, down] = parse_fov(fov);
    p.theta_max = deg_to_rad(up);
    p.theta_min = deg_to_rad(down);
    p.r_max = r_max;
    p.validate();
    return p;
}

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

PointCloud read_cloud(const fs::path& p) {
    const auto e = lower_ext(p);
    if (e == ".bin") return read_velodyne_bin(p);
    if (e == ".ply") return read_ply(p);
    throw UsageError("unsupported point cloud extension '" + e + "' (expected .bin or .ply)");
}

void write_cloud(const PointCloud& c, const fs::path& p) {
    const auto e = lower_ext(p);
    if (e == ".bin") return write_velodyne_bin(c, p);
    if (e == ".ply") return write_ply(c, p);
    throw UsageError("unsupported point cloud extension '" + e + "' (expected .bin or .ply)");
}

std::string scene_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05zu", i);
    return buf;
}

// Reads scene_NNNNN_{low,high}.frim pairs; NNNNN decides the split.
Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("data directory not found: " + dir.string());
    static const std::regex re(R"(scene_(\d+)_high\.frim)");
    std::vector<std::pair<std::size_t, fs::path>> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, re)) found.emplace_back(std::stoul(m[1]), e.path());
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) throw std::runtime_error("no scene_*_high.frim files in " + dir.string());
    Dataset d;
    for (const auto& [idx, high] : found) {
        SamplePair s;
        s.high = read_rangeimage(high);
        s.low = read_rangeimage(dir / (scene_name(idx) + "_low.frim"));
        (is_validation_scene(idx) ? d.val : d.train).push_back(std::move(s));
    }
    return d;
}

FlashConfig load_model_config(const std::string& config_path, const fs::path& ckpt) {
    fs::path p = config_path.empty() ? ckpt.parent_path() / "model.cfg" : fs::path(config_path);
    FlashConfig cfg;
    auto kv = KeyValueConfig::load(p);
    read_model_config(kv, cfg);
    kv.check_consumed();
    return cfg;
}

FlashModel load_model(const std::string& config_path, const std::string& ckpt) {
    FlashModel model(load_model_config(config_path, ckpt));
    auto params = model.parameters();
    restore_parameters(params, ckpt);
    return model;
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    atomic_write(p, text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR range-image super-resolution toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for all subcommands");
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: $FLASH_THREADS or all cores)");

    // project
    std::string p_in, p_out, p_dims = "64x1024", p_fov = "2:-24.8";
    double p_rmax = 80.0;
    auto* project_cmd = app.add_subcommand("project", "Point cloud (.bin/.ply) -> range image (.frim)");
    project_cmd->add_option("--in", p_in, "Input point cloud")->required();
    project_cmd->add_option("--out", p_out, "Output range image")->required();
    project_cmd->add_option("--dims", p_dims, "Image size HxW")->capture_default_str();
    project_cmd->add_option("--fov", p_fov, "Vertical field of view up:down in degrees")->capture_default_str();
    project_cmd->add_option("--r-max", p_rmax, "Maximum range in metres")->capture_default_str();

    // unproject
    std::string u_in, u_out, u_fov = "2:-24.8";
    auto* unproject_cmd = app.add_subcommand("unproject", "Range image (.frim) -> point cloud (.bin/.ply)");
    unproject_cmd->add_option("--in", u_in, "Input range image")->required();
    unproject_cmd->add_option("--out", u_out, "Output point cloud")->required();
    unproject_cmd->add_option("--fov", u_fov, "Vertical field of view up:down in degrees")->capture_default_str();

    // synth
    std::uint64_t s_seed = 0;
    std::size_t s_count = 200;
    std::string s_dims = "64x256", s_out, s_config;
    auto* synth_cmd = app.add_subcommand("synth", "Render synthetic scenes as paired low/high range images");
    synth_cmd->add_option("--seed", s_seed, "Dataset seed")->capture_default_str();
    synth_cmd->add_option("--count", s_count, "Number of scenes")->capture_default_str();
    synth_cmd->add_option("--dims", s_dims, "High-resolution size HxW")->capture_default_str();
    synth_cmd->add_option("--out-dir", s_out, "Output directory")->required();
    synth_cmd->add_option("--config", s_config, "Key-value file with synth.* keys");

    // train
    std::string t_config, t_data, t_out;
    std::size_t t_epochs = 0;
    std::uint64_t t_seed = 0;
    bool t_quiet = false;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a synthesized dataset");
    train_cmd->add_option("--config", t_config, "Key-value file with model.* and train.* keys");
    train_cmd->add_option("--data", t_data, "Directory written by 'synth'")->required();
    train_cmd->add_option("--out", t_out, "Output directory")->required();
    auto* t_epochs_opt = train_cmd->add_option("--epochs", t_epochs, "Override train.epochs");
    auto* t_seed_opt = train_cmd->add_option("--seed", t_seed, "Override model.seed and train.seed");
    train_cmd->add_flag("--quiet", t_quiet, "No per-epoch progress");

    // infer
    std::string i_ckpt, i_config, i_in, i_out, i_ply, i_std, i_fov = "2:-24.8";
    std::size_t i_mc_samples = 0, i_mc_batch = 8;
    double i_dropout = 0.2, i_min_range = 1.0;
    std::uint64_t i_seed = 0;
    auto* infer_cmd = app.add_subcommand("infer", "Predict a high-resolution range image");
    infer_cmd->add_option("--ckpt", i_ckpt, "Checkpoint (.flsh)")->required();
    infer_cmd->add_option("--model-config", i_config, "Model config (default: model.cfg next to the checkpoint)");
    infer_cmd->add_option("--in", i_in, "Low-resolution range image (.frim)")->required();
    infer_cmd->add_option("--out", i_out, "Predicted range image (.frim)")->required();
    infer_cmd->add_option("--ply", i_ply, "Also write the predicted point cloud");
    infer_cmd->add_option("--fov", i_fov, "Vertical field of view of the output, up:down degrees")->capture_default_str();
    infer_cmd->add_option("--min-range", i_min_range, "Predicted cells below this range are invalid")->capture_default_str();
    infer_cmd->add_option("--mc-samples", i_mc_samples, "Monte-Carlo dropout passes (0: deterministic)")->capture_default_str();
    infer_cmd->add_option("--mc-batch", i_mc_batch, "Passes per batch")->capture_default_str();
    infer_cmd->add_option("--dropout", i_dropout, "Dropout probability for MC passes")->capture_default_str();
    infer_cmd->add_option("--seed", i_seed, "MC dropout seed")->capture_default_str();
    infer_cmd->add_option("--std-out", i_std, "Per-pixel std image (default: <out>_std.frim)");

    // eval
    std::string e_pred, e_gt, e_bins = "0:30,30:60", e_report, e_fov = "2:-24.8";
    bool e_squared = false;
    auto* eval_cmd = app.add_subcommand("eval", "Compare predicted and ground-truth range images");
    eval_cmd->add_option("--pred", e_pred, "Predicted range image (.frim)")->required();
    eval_cmd->add_option("--gt", e_gt, "Ground-truth range image (.frim)")->required();
    eval_cmd->add_option("--bins", e_bins, "Distance bins lo:hi,...")->capture_default_str();
    eval_cmd->add_option("--report", e_report, "Write the JSON report here");
    eval_cmd->add_option("--fov", e_fov, "Vertical field of view up:down degrees")->capture_default_str();
    eval_cmd->add_flag("--squared-cd", e_squared, "Chamfer distance on squared distances");

    // bench
    std::string b_ckpt, b_config;
    std::size_t b_reps = 20, b_warmup = 3, b_mc_samples = 0, b_mc_batch = 8;
    double b_dropout = 0.2;
    auto* bench_cmd = app.add_subcommand("bench", "Median forward latency, optionally with MC dropout");
    bench_cmd->add_option("--ckpt", b_ckpt, "Checkpoint (default: random initialisation)");
    bench_cmd->add_option("--config", b_config, "Model config (default: model.cfg next to the checkpoint)");
    bench_cmd->add_option("--reps", b_reps, "Timed repetitions")->capture_default_str();
    bench_cmd->add_option("--warmup", b_warmup, "Untimed warmup passes")->capture_default_str();
    bench_cmd->add_option("--mc-samples", b_mc_samples, "Also time MC dropout with this many passes")->capture_default_str();
    bench_cmd->add_option("--mc-batch", b_mc_batch, "Passes per MC batch")->capture_default_str();
    bench_cmd->add_option("--dropout", b_dropout, "MC dropout probability")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const std::size_t workers = thread_count(threads);

        if (*project_cmd) {
            const auto proj = make_projection(p_dims, p_fov, p_rmax);
            const auto result = project(read_cloud(p_in), proj);
            write_rangeimage(result.image, p_out);
            std::cout << "valid " << result.image.valid_count() << " dropped " << result.dropped << "\n";
        } else if (*unproject_cmd) {
            const RangeImage img = read_rangeimage(u_in);
            const auto proj = make_projection(std::to_string(img.height) + "x" + std::to_string(img.width), u_fov, 80.0);
            const PointCloud c = unproject(img, proj);
            write_cloud(c, u_out);
            std::cout << "points " << c.size() << "\n";
        } else if (*synth_cmd) {
            SynthConfig sc;
            std::tie(sc.projection.height, sc.projection.width) = parse_dims(s_dims);
            if (!s_config.empty()) {
                auto kv = KeyValueConfig::load(s_config);
                read_synth_config(kv, sc);
                kv.check_consumed();
                if (synth_cmd->count("--dims")) std::tie(sc.projection.height, sc.projection.width) = parse_dims(s_dims);
            }
            sc.validate();
            fs::create_directories(s_out);
            parallel_for(s_count, workers, [&](std::size_t i) {
                const SamplePair p = make_pair(generate_scene(scene_seed(s_seed, i), sc), sc);
                write_rangeimage(p.high, fs::path(s_out) / (scene_name(i) + "_high.frim"));
                write_rangeimage(p.low, fs::path(s_out) / (scene_name(i) + "_low.frim"));
            });
            std::cout << "wrote " << s_count << " scenes to " << s_out << "\n";
        } else if (*train_cmd) {
            FlashConfig mc;
            TrainConfig tc;
            if (!t_config.empty()) {
                auto kv = KeyValueConfig::load(t_config);
                read_model_config(kv, mc);
                read_train_config(kv, tc);
                kv.check_consumed();
            }
            if (*t_epochs_opt) tc.epochs = t_epochs;
            if (*t_seed_opt) mc.seed = tc.seed = t_seed;
            tc.out_dir = t_out;
            const Dataset data = load_dataset(t_data);
            FlashModel model(mc);
            fs::create_directories(t_out);
            write_text(fs::path(t_out) / "model.cfg", to_kv(mc));
            write_text(fs::path(t_out) / "train.cfg", to_kv(tc));
            std::cout << "train " << data.train.size() << " / val " << data.val.size() << " scenes, "
                      << model.parameter_count() << " parameters\n";
            const auto result = train(model, data, tc, [&](const EpochRecord& r) {
                if (t_quiet) return;
                std::printf("epoch %4zu  train %.6f  val %.6f  lr %.3g\n", r.epoch, r.train_l1, r.val_l1, r.lr);
                std::fflush(stdout);
            });
            std::printf("final val L1 %.6f (initial %.6f)\n", result.curve.back().val_l1, result.curve.front().val_l1);
        } else if (*infer_cmd) {
            const FlashModel model = load_model(i_config, i_ckpt);
            const RangeImage low = read_rangeimage(i_in);
            const auto& cfg = model.config();
            if (low.height != cfg.input_height || low.width != cfg.width)
                throw std::runtime_error("input is " + std::to_string(low.height) + "x" + std::to_string(low.width) +
                                         ", model expects " + std::to_string(cfg.input_height) + "x" +
                                         std::to_string(cfg.width));
            const auto proj = make_projection(std::to_string(cfg.output_height()) + "x" + std::to_string(cfg.width),
                                              i_fov, 80.0);
            const Tensor input = model_input(low);
            Tensor pred;
            if (i_mc_samples > 0) {
                McOptions mo;
                mo.samples = i_mc_samples;
                mo.batch = i_mc_batch;
                mo.dropout = i_dropout;
                mo.seed = i_seed;
                mo.threads = workers;
                McResult mr = mc_dropout_infer(model, input, mo);
                pred = mr.mean;
                RangeImage std_img(cfg.output_height(), cfg.width);
                for (std::size_t k = 0; k < mr.std.size(); ++k) {
                    std_img.range[k] = static_cast<float>(mr.std[k]);
                    std_img.mask[k] = 1;
                }
                const fs::path std_path = i_std.empty() ? fs::path(i_out).replace_extension("").string() + "_std.frim"
                                                  : i_std;
                write_rangeimage(std_img, std_path);
            } else {
                NoGradGuard guard;
                pred = model.forward(input);
            }
            const RangeImage out = prediction_to_image(pred, i_min_range, proj.r_max);
            write_rangeimage(out, i_out);
            if (!i_ply.empty()) write_ply(unproject(out, proj), i_ply);
            std::cout << "valid " << out.valid_count() << " of " << out.range.size() << " cells\n";
        } else if (*eval_cmd) {
            const auto bins = parse_bins(e_bins);
            const RangeImage pred = read_rangeimage(e_pred);
            const RangeImage gt = read_rangeimage(e_gt);
            if (pred.height != gt.height || pred.width != gt.width)
                throw std::runtime_error("prediction and ground truth differ in size");
            const auto proj = make_projection(std::to_string(gt.height) + "x" + std::to_string(gt.width), e_fov, 80.0);
            ChamferOptions co;
            co.squared = e_squared;
            const MetricReport report = evaluate(pred, gt, proj, bins, co);
            const std::string json = report_json(report);
            std::cout << report_table(report);
            if (!e_report.empty()) write_text(e_report, json);
        } else if (*bench_cmd) {
            FlashConfig cfg;
            if (!b_config.empty() || !b_ckpt.empty()) cfg = load_model_config(b_config, b_ckpt);
            FlashModel model(cfg);
            if (!b_ckpt.empty()) {
                auto params = model.parameters();
                restore_parameters(params, b_ckpt);
            }
            Rng rng(0);
            std::vector<double> v(cfg.input_height * cfg.width);
            for (auto& x : v) x = std::log1p(2.0 + 60.0 * rng.uniform());
            const Tensor input({cfg.input_height, cfg.width}, std::move(v));
            const double single = time_single_pass(model, input, b_warmup, b_reps);
            std::printf("single-pass median: %.3f ms (%zu reps, %zu warmup)\n", single, b_reps, b_warmup);
            if (b_mc_samples > 0) {
                McOptions mo;
                mo.samples = b_mc_samples;
                mo.batch = b_mc_batch;
                mo.dropout = b_dropout;
                mo.threads = 1;  // timing runs are single-threaded
                std::vector<double> ms;
                for (std::size_t r = 0; r < std::max<std::size_t>(1, b_reps / 4); ++r)
                    ms.push_back(mc_dropout_infer(model, input, mo).latency_ms);
                std::sort(ms.begin(), ms.end());
                const double mc = ms[ms.size() / 2];
                std::printf("mc-dropout median: %.3f ms (%zu samples, batch %zu), ratio %.2f\n", mc, b_mc_samples,
                            b_mc_batch, mc / single);
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
