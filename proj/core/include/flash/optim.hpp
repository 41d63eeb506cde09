#pragma once

#include <cstddef>
#include <vector>

#include "flash/checkpoint.hpp"

namespace flash {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Parameters without an accumulated
// gradient are left untouched on that step.
class AdamW {
   public:
    explicit AdamW(ParameterList params, AdamWConfig cfg = {});

    void step(double lr);
    void zero_grad();

    std::size_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }
    const ParameterList& parameters() const { return params_; }

   private:
    ParameterList params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t step_ = 0;
};

// Linear warmup followed by cosine annealing with warm restarts; each
// cycle's peak is the previous one times `decay`.
struct LrSchedule {
    double warmup_epochs = 6.0;
    double cycle_length = 60.0;
    double peak = 5e-4;
    double decay = 0.7;
    double floor = -1.0;  // < 0: peak / 100

    double floor_lr() const { return floor < 0.0 ? peak / 100.0 : floor; }
    void validate() const;

    // The full-scale schedule: 60 warmup epochs, restarts every 600.
    static LrSchedule full_scale();
};

// `epoch` may be fractional.
double lr_at(const LrSchedule& s, double epoch);

}  // namespace flash
