#pragma once

#include <iosfwd>
#include <vector>

#include "repbench/model.hpp"
#include "repbench/tasks.hpp"
#include "repbench/tokenizer.hpp"

namespace repbench {

// Anything that maps source sequences to predicted target sequences. Metrics
// are pure functions of (predictions, truths), so oracles and constant
// baselines plug in next to real models.
struct Predictor {
    virtual ~Predictor() = default;
    virtual std::vector<TokenSeq> predict(const std::vector<TokenSeq>& srcs) = 0;
};

class ModelPredictor : public Predictor {
public:
    ModelPredictor(Transformer<float>& model, const ModelState<float>& state, int max_len,
                   int decode_batch = 256)
        : model_(model), state_(state), max_len_(max_len), decode_batch_(decode_batch) {}

    std::vector<TokenSeq> predict(const std::vector<TokenSeq>& srcs) override;

private:
    Transformer<float>& model_;
    const ModelState<float>& state_;
    int max_len_;
    int decode_batch_;
};

// Re-derives the exact answer from the source tokens; the perfect baseline.
class OraclePredictor : public Predictor {
public:
    explicit OraclePredictor(TaskKind task) : task_(task) {}
    std::vector<TokenSeq> predict(const std::vector<TokenSeq>& srcs) override;

private:
    TaskKind task_;
};

class ConstantPredictor : public Predictor {
public:
    explicit ConstantPredictor(TokenSeq output) : output_(std::move(output)) {}
    std::vector<TokenSeq> predict(const std::vector<TokenSeq>& srcs) override {
        return std::vector<TokenSeq>(srcs.size(), output_);
    }

private:
    TokenSeq output_;
};

struct GcdReport {
    std::vector<double> per_class_accuracy; // classes 1..100
    int correct_count = 0;                  // classes with accuracy >= tau
    double tau = 0.95;

    double metric() const { return correct_count / 100.0; }
};

struct AccuracyReport {
    double accuracy = 0.0;
    int sample_count = 0;
};

// Per-class accuracy over the structured class test set; a class counts as
// predicted correctly when its accuracy reaches tau. Undecodable outputs are
// wrong, never fatal. dump, when set, receives "input truth prediction ok"
// lines.
GcdReport eval_gcd(Predictor& predictor, const std::vector<GcdExample>& testset, double tau = 0.95,
                   std::ostream* dump = nullptr);

// Fresh test set of n uniform pairs drawn from seed.
AccuracyReport eval_modmul(Predictor& predictor, uint64_t seed, int n = 10000,
                           std::ostream* dump = nullptr);

// Fresh test set of n matrices; correct when the l1 relative error of the
// (descending) eigenvalue list is below 0.05. Wrong-length outputs are wrong.
AccuracyReport eval_eigen(Predictor& predictor, uint64_t seed, int n, int matrix_dim,
                          std::ostream* dump = nullptr);

// Fraction of predictions equal to the full target token sequence.
double exact_match(Predictor& predictor, const std::vector<TokenSeq>& srcs,
                   const std::vector<TokenSeq>& tgts);

} // namespace repbench
