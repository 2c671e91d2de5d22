#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repbench/rng.hpp"

namespace repbench {

constexpr int kBatchSize = 64;

enum class SamplerLaw { Single, TwoSet, Shifting, Exponential };

const char* law_name(SamplerLaw law);
std::optional<SamplerLaw> law_from_name(const std::string& name);

// Index-frequency law over a shuffled training set. All laws draw i.i.d. with
// replacement; the repeated set is the first S positions.
struct SamplerSpec {
    SamplerLaw law = SamplerLaw::Single;
    std::optional<uint64_t> N; // data budget; nullopt = unlimited stream
    uint64_t S = 0;            // repeated-set size (two-set / shifting)
    double p = 0.0;            // repeated-set probability
    double k = 0.0;            // shifting: average repetitions per window
    double beta = 0.0;         // exponential rate

    bool unlimited() const { return !N.has_value(); }
    void validate() const; // throws std::invalid_argument naming the bad field

    // shifting: the window advances every k*S/p draws
    uint64_t window_period() const;
};

// S_eff <-> beta conversion at the p = 0.25 convention.
double s_eff_to_beta(uint64_t s_eff, uint64_t N);
uint64_t beta_to_s_eff(double beta, uint64_t N);

// Exact CDF of the truncated discrete exponential: mass of indices [0, i].
double exponential_cdf(double beta, uint64_t N, uint64_t i);

// One draw under the (non-shifting) law.
uint64_t draw_index(const SamplerSpec& spec, Rng& rng);

// Sequential index stream; resumable from (seed, rng counter, draw count).
class IndexStream {
public:
    IndexStream(const SamplerSpec& spec, uint64_t seed);

    uint64_t next();
    uint64_t draws() const { return draws_; }
    uint64_t rng_counter() const { return rng_.counter(); }
    void restore(uint64_t rng_counter, uint64_t draws, uint64_t fresh_counter);
    uint64_t fresh_counter() const { return fresh_counter_; }

    const SamplerSpec& spec() const { return spec_; }

    // current shifting window start (0 for other laws)
    uint64_t window_start() const;

private:
    uint64_t draw_fresh();

    SamplerSpec spec_;
    Rng rng_;
    uint64_t draws_ = 0;
    uint64_t fresh_counter_ = 0; // unlimited bulk: next never-seen index
    friend class BatchStream;
};

enum class BatchMode { Mixed, Mono };

const char* batch_mode_name(BatchMode mode);
std::optional<BatchMode> batch_mode_from_name(const std::string& name);

struct BatchSpec {
    int size = kBatchSize;
    BatchMode mode = BatchMode::Mixed;
};

enum class BatchOrigin { Mixed, Repeated, Bulk };

struct IndexBatch {
    std::vector<uint64_t> indices;
    BatchOrigin origin = BatchOrigin::Mixed;
};

// Groups stream draws into batches. Mono mode draws each whole batch from one
// set; rejected for single/exponential laws.
class BatchStream {
public:
    BatchStream(const SamplerSpec& spec, const BatchSpec& batch, uint64_t seed);

    IndexBatch next();
    IndexStream& stream() { return stream_; }
    const IndexStream& stream() const { return stream_; }

private:
    BatchSpec batch_;
    IndexStream stream_;
};

// Empirical frequency audit of a sampler law over T draws.
struct FrequencyReport {
    uint64_t total_draws = 0;
    uint64_t region_boundary = 0; // S (two-set/shifting), S_eff (exponential), N (single)
    uint64_t repeated_draws = 0;  // draws below the boundary
    double repeated_mass = 0.0;
    double mean_repeated_repetitions = 0.0; // repeated_draws / boundary
    uint64_t max_repeated_repetitions = 0;
    double mean_bulk_repetitions = 0.0; // bulk draws / (N - boundary)

    std::string table() const; // line-oriented text table
};

FrequencyReport audit_frequencies(const SamplerSpec& spec, uint64_t T, uint64_t seed);

// Average repetition counts implied by the law over T total draws.
double expected_repeated_repetitions(const SamplerSpec& spec, uint64_t T); // p*T/S
double expected_bulk_repetitions(const SamplerSpec& spec, uint64_t T);    // (1-p)*T/(N-S)

} // namespace repbench
