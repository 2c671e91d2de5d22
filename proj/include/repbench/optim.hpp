#pragma once

#include <optional>
#include <string>
#include <vector>

#include "repbench/model.hpp"

namespace repbench {

enum class OptimKind { Adam, AdamW };

const char* optim_name(OptimKind kind);
std::optional<OptimKind> optim_from_name(const std::string& name);

struct OptimSpec {
    OptimKind kind = OptimKind::Adam;
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0; // adam: added to the gradient; adamw: decoupled

    void validate() const;
};

template <typename T>
struct OptimState {
    std::vector<Mat<T>> m, v; // first/second moment accumulators
    int64_t step_count = 0;
    uint64_t skipped_steps = 0; // non-finite-gradient steps, counted not fatal

    static OptimState zeros_like(const std::vector<Mat<T>>& params) {
        OptimState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& p : params) {
            s.m.push_back(Mat<T>::Zero(p.rows(), p.cols()));
            s.v.push_back(Mat<T>::Zero(p.rows(), p.cols()));
        }
        return s;
    }
};

// One Adam/AdamW update over a tensor list. Returns false when the step was
// skipped because a gradient was non-finite.
template <typename T>
bool optim_step(const OptimSpec& spec, OptimState<T>& state, std::vector<Mat<T>>& params,
                const std::vector<Mat<T>>& grads);

template <typename T>
bool optim_step(const OptimSpec& spec, OptimState<T>& state, ModelState<T>& model,
                const std::vector<Mat<T>>& grads) {
    return optim_step(spec, state, model.tensors, grads);
}

// --- Finite-difference gradient oracle (64-bit mode) -------------------------

struct GradCheckEntry {
    std::string tensor;
    int row = 0, col = 0;
    double analytic = 0.0, numeric = 0.0, rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double denom_floor = 0.0;
    std::vector<GradCheckEntry> entries;

    std::string summary() const;
};

// Central differences (L(w+h)-L(w-h))/2h on sample_count randomly chosen
// scalar parameters of a freshly initialized model.
GradCheckReport grad_check(const ModelConfig& cfg, const TokenBatch& batch, int sample_count,
                           double step_size, uint64_t seed, double denom_floor = 1e-6,
                           double loss_scale = 1.0);

extern template bool optim_step<float>(const OptimSpec&, OptimState<float>&, std::vector<Mat<float>>&,
                                       const std::vector<Mat<float>>&);
extern template bool optim_step<double>(const OptimSpec&, OptimState<double>&,
                                        std::vector<Mat<double>>&, const std::vector<Mat<double>>&);

} // namespace repbench
