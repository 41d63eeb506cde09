#include "flash/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flash {

AdamW::AdamW(ParameterList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        if (!p.has_grad()) continue;
        auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr * cfg_.weight_decay * w[j];
            w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void LrSchedule::validate() const {
    if (!(warmup_epochs >= 0.0)) throw std::invalid_argument("LrSchedule: warmup must be >= 0");
    if (!(cycle_length >= 1.0)) throw std::invalid_argument("LrSchedule: cycle length must be >= 1");
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("LrSchedule: decay must lie in (0, 1]");
    if (!(peak >= 0.0)) throw std::invalid_argument("LrSchedule: peak must be >= 0");
    if (floor_lr() > peak) throw std::invalid_argument("LrSchedule: floor exceeds peak");
}

LrSchedule LrSchedule::full_scale() {
    LrSchedule s;
    s.warmup_epochs = 60.0;
    s.cycle_length = 600.0;
    return s;
}

double lr_at(const LrSchedule& s, double epoch) {
    if (!(epoch >= 0.0)) throw std::invalid_argument("lr_at: epoch must be >= 0");
    if (epoch < s.warmup_epochs) return s.peak * epoch / s.warmup_epochs;
    const double t = epoch - s.warmup_epochs;
    const double cycle = std::floor(t / s.cycle_length);
    const double tc = t - cycle * s.cycle_length;
    const double lo = s.floor_lr();
    const double hi = std::max(s.peak * std::pow(s.decay, cycle), lo);
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * tc / s.cycle_length));
    return w * hi + (1.0 - w) * lo;
}

}  // namespace flash
