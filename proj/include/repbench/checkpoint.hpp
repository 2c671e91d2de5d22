#pragma once

#include <optional>
#include <string>

#include "repbench/model.hpp"
#include "repbench/optim.hpp"

namespace repbench {

// Training-loop position captured alongside model/optimizer tensors so a run
// can resume bit-exactly.
struct TrainerCheckpointState {
    uint64_t sampler_rng_counter = 0;
    uint64_t sampler_draws = 0;
    uint64_t sampler_fresh = 0;
    uint64_t examples_consumed = 0;
    uint64_t eval_ordinal = 0;
    double train_loss_sum = 0.0;
    uint64_t train_loss_batches = 0;
    uint64_t dropout_rng_counter = 0;
};

struct LoadedCheckpoint {
    ModelState<float> model;
    std::optional<OptimState<float>> optim;
    std::optional<TrainerCheckpointState> trainer;
};

// Binary layout (little-endian): magic "RBCK", version u32, config block,
// named float32 tensors, then optional optimizer and trainer sections.
void save_checkpoint(const std::string& path, const ModelState<float>& model,
                     const OptimState<float>* optim = nullptr,
                     const TrainerCheckpointState* trainer = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace repbench
