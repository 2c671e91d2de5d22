#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "repbench/checkpoint.hpp"
#include "repbench/evaluation.hpp"
#include "repbench/model.hpp"
#include "repbench/optim.hpp"
#include "repbench/sampling.hpp"
#include "repbench/tasks.hpp"

namespace repbench {

// A training set addressed by index: example(i) is a pure function of
// (seed, i). Finite budgets use indices [0, N); unlimited streams treat i as
// the draw counter, every index fresh.
struct DatasetSpec {
    TaskKind task = TaskKind::Gcd;
    std::optional<uint64_t> data_budget; // nullopt = unlimited
    uint64_t seed = 1;
    CurationSpec bulk;
    std::optional<CurationSpec> repeated; // curation override for the first repeated_size indices
    uint64_t repeated_size = 0;
    int matrix_dim = 5;

    void validate() const;
};

class Dataset {
public:
    explicit Dataset(DatasetSpec spec);

    TaskExample example(uint64_t index) const;
    std::pair<TokenSeq, TokenSeq> sequences(uint64_t index) const;
    const DatasetSpec& spec() const { return spec_; }

private:
    DatasetSpec spec_;
};

// Sequence-length envelopes and decode caps per task.
int task_max_src_len(TaskKind task, int matrix_dim);
int task_max_tgt_len(TaskKind task, int matrix_dim);

struct RunConfig {
    std::string run_id;
    TaskKind task = TaskKind::Gcd;
    DatasetSpec dataset;
    SamplerSpec sampler;
    BatchSpec batch;
    ModelConfig model;
    OptimSpec optim;
    uint64_t training_budget = 0;   // T, examples
    uint64_t eval_cadence = 100000; // E, examples between evaluations
    uint64_t seed = 1;
    uint64_t eval_seed = 12061; // shared across runs so test sets are comparable
    int gcd_per_class = 1000;
    int eval_samples = 10000;
    int test_loss_samples = 1024;
    double tau = 0.95;
    uint64_t checkpoint_every = 0; // examples; 0 = final checkpoint only
    std::string out_dir = ".";

    void validate() const; // names the first failing field
};

struct CurvePoint {
    uint64_t examples_consumed = 0;
    double train_loss = 0.0; // running mean since the previous evaluation
    double test_loss = 0.0;
    double metric = 0.0; // task metric in [0, 1]; gcd = correct_count / 100
    double wall_seconds = 0.0;
};

struct ThresholdCrossing {
    double level = 0.0;
    std::optional<uint64_t> examples_consumed;
};

// Earliest evaluation index where the trailing-W least-squares slope of the
// test loss is positive while the train-loss slope is negative, and the same
// holds for the next window.
std::optional<int> detect_overfit(const std::vector<CurvePoint>& curve, int window = 5);

std::vector<ThresholdCrossing> detect_thresholds(const std::vector<CurvePoint>& curve,
                                                 const std::vector<double>& levels = {0.50, 0.99});

struct RunResult {
    std::vector<CurvePoint> curve;
    std::vector<ThresholdCrossing> thresholds;
    std::optional<int> overfit_index;
    double final_metric = 0.0;
    std::string checkpoint_path;
    uint64_t skipped_steps = 0;
};

class Trainer {
public:
    explicit Trainer(RunConfig config);

    // Consumes training examples until min(training_budget, stop_after),
    // evaluating every eval_cadence examples. A partial trailing batch is
    // dropped. on_point fires after each evaluation.
    RunResult run(std::optional<uint64_t> stop_after = std::nullopt,
                  const std::function<void(const CurvePoint&)>& on_point = {});

    static Trainer resume(RunConfig config, const std::string& checkpoint_path);

    const RunConfig& config() const { return cfg_; }
    uint64_t examples_consumed() const { return consumed_; }
    std::string checkpoint_path() const;

private:
    CurvePoint evaluate(double wall_seconds);
    void write_checkpoint() const;

    RunConfig cfg_;
    Dataset dataset_;
    Transformer<float> model_;
    ModelState<float> state_;
    OptimState<float> optim_;
    std::vector<Mat<float>> grads_;
    Rng dropout_rng_;
    BatchStream batches_;
    std::vector<GcdExample> gcd_testset_; // fixed per run (gcd only)
    std::vector<TokenSeq> loss_srcs_;     // fixed test-loss sample (gcd only)
    std::vector<TokenSeq> loss_tgts_;
    uint64_t consumed_ = 0;
    uint64_t eval_ordinal_ = 0;
    double train_loss_sum_ = 0.0;
    uint64_t train_loss_batches_ = 0;
};

} // namespace repbench
