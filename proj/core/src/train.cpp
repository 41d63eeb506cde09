#include "flash/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flash/ops.hpp"
#include "flash/svg.hpp"

namespace flash {

Tensor model_input(const RangeImage& low) {
    const RangeImage lg = log_transform(low);
    std::vector<double> v(lg.range.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = lg.mask[i] ? static_cast<double>(lg.range[i]) : 0.0;
    return Tensor({low.height, low.width}, std::move(v));
}

Target model_target(const RangeImage& high) {
    return {model_input(high), high.mask};
}

RangeImage prediction_to_image(const Tensor& log_pred, double min_range, double max_range) {
    if (log_pred.rank() != 2) throw std::invalid_argument("prediction_to_image: expected [H, W]");
    RangeImage img(log_pred.size(0), log_pred.size(1));
    auto d = log_pred.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = std::expm1(d[i]);
        if (r >= min_range && r <= max_range) {
            img.range[i] = static_cast<float>(r);
            img.mask[i] = 1;
        }
    }
    return img;
}

void TrainConfig::validate() const {
    if (batch == 0) throw std::invalid_argument("TrainConfig: batch must be positive");
    schedule.validate();
}

namespace {

double sample_l1(const FlashModel& model, const SamplePair& s, bool* empty = nullptr) {
    const Target t = model_target(s.high);
    const L1Result r = l1_loss(model.forward(model_input(s.low)), t.value, t.mask);
    if (empty) *empty = r.empty;
    return r.loss.item();
}

}  // namespace

double evaluate_l1(const FlashModel& model, const std::vector<SamplePair>& samples) {
    NoGradGuard guard;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        bool empty = false;
        const double l = sample_l1(model, s, &empty);
        if (empty) continue;
        total += l;
        ++n;
    }
    return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::string loss_csv(const std::vector<EpochRecord>& curve) {
    std::string out = "epoch,train_l1,val_l1,lr\n";
    char buf[128];
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_l1, r.val_l1, r.lr);
        out += buf;
    }
    return out;
}

TrainResult train(FlashModel& model, const Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("train: empty training set");
    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    ParameterList params = model.parameters();
    AdamW opt(params, cfg.adamw);
    Rng root(cfg.seed);
    Rng dropout_rng = root.split(1);
    const bool stochastic = model.config().dropout > 0.0;

    TrainResult result;
    result.curve.push_back({0, evaluate_l1(model, data.train), evaluate_l1(model, data.val), 0.0});
    if (on_epoch) on_epoch(result.curve.back());

    const std::size_t n = data.train.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.split(1000 + epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        double epoch_loss = 0.0;
        std::size_t counted = 0;
        double lr = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t begin = step * cfg.batch, end = std::min(n, begin + cfg.batch);
            opt.zero_grad();
            for (std::size_t k = begin; k < end; ++k) {
                const SamplePair& s = data.train[order[k]];
                const Target t = model_target(s.high);
                ForwardOptions fo;
                fo.stochastic = stochastic;
                fo.rng = &dropout_rng;
                const L1Result r = l1_loss(model.forward(model_input(s.low), fo), t.value, t.mask);
                const double l = r.loss.item();
                if (!std::isfinite(l))
                    throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                             ", step " + std::to_string(step));
                if (r.empty) continue;
                epoch_loss += l;
                ++counted;
                ops::scale(r.loss, 1.0 / static_cast<double>(end - begin)).backward();
            }
            lr = lr_at(cfg.schedule, static_cast<double>(epoch) +
                                         static_cast<double>(step + 1) / static_cast<double>(steps_per_epoch));
            opt.step(lr);
            ++result.steps;
        }

        EpochRecord rec{epoch + 1, counted ? epoch_loss / static_cast<double>(counted) : 0.0,
                        evaluate_l1(model, data.val), lr};
        result.curve.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (!cfg.out_dir.empty() && cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(params, cfg.out_dir / ("epoch_" + std::to_string(epoch + 1) + ".flsh"));
    }

    if (!cfg.out_dir.empty()) {
        save_checkpoint(params, cfg.out_dir / "model.flsh");
        atomic_write(cfg.out_dir / "loss.csv", loss_csv(result.curve));
        std::vector<SvgSeries> series(2);
        series[0].name = "train L1";
        series[1].name = "val L1";
        for (const auto& r : result.curve) {
            series[0].points.emplace_back(static_cast<double>(r.epoch), r.train_l1);
            if (std::isfinite(r.val_l1)) series[1].points.emplace_back(static_cast<double>(r.epoch), r.val_l1);
        }
        atomic_write(cfg.out_dir / "loss.svg", svg_line_chart("Loss", "epoch", "L1 (log range)", series));
    }
    return result;
}

}  // namespace flash
