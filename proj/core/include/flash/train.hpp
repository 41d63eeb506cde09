#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flash/network.hpp"
#include "flash/optim.hpp"
#include "flash/rangeimg.hpp"
#include "flash/synth.hpp"

namespace flash {

// Low-res input in log-range; invalid cells are 0.
Tensor model_input(const RangeImage& low_meters);

struct Target {
    Tensor value;                     // log-range
    std::vector<std::uint8_t> mask;
};
Target model_target(const RangeImage& high_meters);

// Log-range prediction -> metres. A cell is valid when its range lies in
// [min_range, max_range].
RangeImage prediction_to_image(const Tensor& log_pred, double min_range, double max_range);

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch = 4;
    LrSchedule schedule;
    AdamWConfig adamw;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only
    std::filesystem::path out_dir;     // empty: nothing written

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 0 is the untrained model
    double train_l1 = 0.0;
    double val_l1 = 0.0;    // NaN without a validation split
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> curve;  // curve[0] is epoch 0
    std::size_t steps = 0;
};

// Minibatch AdamW on mean masked L1 of log-range. Samples in a batch are
// processed one after another and their gradients summed. Throws
// std::runtime_error on a non-finite loss.
TrainResult train(FlashModel& model, const Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Mean per-sample masked L1 (deterministic pass); NaN when no sample has a
// valid cell.
double evaluate_l1(const FlashModel& model, const std::vector<SamplePair>& samples);

// "epoch,train_l1,val_l1,lr" with round-trip precision.
std::string loss_csv(const std::vector<EpochRecord>& curve);

}  // namespace flash
