#include "repbench/sampling.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace repbench {

namespace {
constexpr uint64_t kSamplerTag = 0x5a4d504c; // rng stream tag
}

const char* law_name(SamplerLaw law) {
    switch (law) {
        case SamplerLaw::Single: return "single";
        case SamplerLaw::TwoSet: return "two-set";
        case SamplerLaw::Shifting: return "shifting";
        case SamplerLaw::Exponential: return "exponential";
    }
    return "?";
}

std::optional<SamplerLaw> law_from_name(const std::string& name) {
    if (name == "single") return SamplerLaw::Single;
    if (name == "two-set" || name == "twoset") return SamplerLaw::TwoSet;
    if (name == "shifting") return SamplerLaw::Shifting;
    if (name == "exponential") return SamplerLaw::Exponential;
    return std::nullopt;
}

const char* batch_mode_name(BatchMode mode) {
    return mode == BatchMode::Mixed ? "mixed" : "mono";
}

std::optional<BatchMode> batch_mode_from_name(const std::string& name) {
    if (name == "mixed") return BatchMode::Mixed;
    if (name == "mono") return BatchMode::Mono;
    return std::nullopt;
}

void SamplerSpec::validate() const {
    if (N && *N == 0) throw std::invalid_argument("sampler: N must be positive");
    switch (law) {
        case SamplerLaw::Single:
            break;
        case SamplerLaw::TwoSet:
        case SamplerLaw::Shifting:
            if (S == 0) throw std::invalid_argument("sampler: S must be positive");
            if (N && S >= *N) throw std::invalid_argument("sampler: S must be smaller than N");
            if (p < 0.0 || p > 1.0) throw std::invalid_argument("sampler: p must lie in [0, 1]");
            if (law == SamplerLaw::Shifting) {
                if (!N) throw std::invalid_argument("sampler: shifting requires a finite N");
                if (k < 1.0) throw std::invalid_argument("sampler: k must be >= 1");
                if (p <= 0.0) throw std::invalid_argument("sampler: shifting requires p > 0");
            }
            break;
        case SamplerLaw::Exponential:
            if (!N) throw std::invalid_argument("sampler: exponential requires a finite N");
            if (!(beta > 0.0)) throw std::invalid_argument("sampler: beta must be positive");
            break;
    }
}

uint64_t SamplerSpec::window_period() const {
    double period = k * static_cast<double>(S) / p;
    return std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(period)));
}

double s_eff_to_beta(uint64_t s_eff, uint64_t N) {
    if (s_eff == 0 || s_eff >= N) throw std::invalid_argument("s_eff_to_beta: need 0 < s_eff < N");
    return -std::log(0.75) * static_cast<double>(N) / static_cast<double>(s_eff);
}

uint64_t beta_to_s_eff(double beta, uint64_t N) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta_to_s_eff: beta must be positive");
    return static_cast<uint64_t>(std::llround(-std::log(0.75) * static_cast<double>(N) / beta));
}

double exponential_cdf(double beta, uint64_t N, uint64_t i) {
    double ln_q = -beta / static_cast<double>(N);
    if (i >= N - 1) return 1.0;
    return std::expm1(static_cast<double>(i + 1) * ln_q) / std::expm1(static_cast<double>(N) * ln_q);
}

namespace {

uint64_t draw_exponential(double beta, uint64_t N, Rng& rng) {
    double ln_q = -beta / static_cast<double>(N);
    double one_minus_qN = -std::expm1(static_cast<double>(N) * ln_q);
    double u = rng.uniform();
    double x = std::floor(std::log1p(-u * one_minus_qN) / ln_q);
    if (x < 0.0) return 0;
    auto i = static_cast<uint64_t>(x);
    return i >= N ? N - 1 : i;
}

} // namespace

uint64_t draw_index(const SamplerSpec& spec, Rng& rng) {
    spec.validate();
    if (spec.unlimited()) throw std::invalid_argument("draw_index: unlimited streams need IndexStream");
    uint64_t N = *spec.N;
    switch (spec.law) {
        case SamplerLaw::Single:
            return rng.below(N);
        case SamplerLaw::TwoSet:
            return rng.uniform() < spec.p ? rng.below(spec.S) : spec.S + rng.below(N - spec.S);
        case SamplerLaw::Exponential:
            return draw_exponential(spec.beta, N, rng);
        case SamplerLaw::Shifting:
            throw std::invalid_argument("draw_index: shifting law needs IndexStream");
    }
    throw std::logic_error("draw_index: unhandled law");
}

IndexStream::IndexStream(const SamplerSpec& spec, uint64_t seed)
    : spec_(spec), rng_(derive_seed(seed, kSamplerTag)) {
    spec_.validate();
}

void IndexStream::restore(uint64_t rng_counter, uint64_t draws, uint64_t fresh_counter) {
    rng_.seek(rng_counter);
    draws_ = draws;
    fresh_counter_ = fresh_counter;
}

uint64_t IndexStream::window_start() const {
    if (spec_.law != SamplerLaw::Shifting) return 0;
    uint64_t window = draws_ / spec_.window_period();
    uint64_t n_windows = *spec_.N / spec_.S; // wrap past N-S back to 0
    return (window % n_windows) * spec_.S;
}

uint64_t IndexStream::draw_fresh() { return spec_.S + fresh_counter_++; }

uint64_t IndexStream::next() {
    uint64_t idx = 0;
    switch (spec_.law) {
        case SamplerLaw::Single:
            idx = spec_.unlimited() ? fresh_counter_++ : rng_.below(*spec_.N);
            break;
        case SamplerLaw::TwoSet:
            if (rng_.uniform() < spec_.p) {
                idx = rng_.below(spec_.S);
            } else {
                idx = spec_.unlimited() ? draw_fresh() : spec_.S + rng_.below(*spec_.N - spec_.S);
            }
            break;
        case SamplerLaw::Shifting: {
            uint64_t start = window_start();
            if (rng_.uniform() < spec_.p) {
                idx = start + rng_.below(spec_.S);
            } else {
                uint64_t v = rng_.below(*spec_.N - spec_.S);
                idx = v < start ? v : v + spec_.S;
            }
            break;
        }
        case SamplerLaw::Exponential:
            idx = draw_exponential(spec_.beta, *spec_.N, rng_);
            break;
    }
    ++draws_;
    return idx;
}

BatchStream::BatchStream(const SamplerSpec& spec, const BatchSpec& batch, uint64_t seed)
    : batch_(batch), stream_(spec, seed) {
    if (batch.size < 1) throw std::invalid_argument("batch: size must be >= 1");
    if (batch.mode == BatchMode::Mono &&
        (spec.law == SamplerLaw::Single || spec.law == SamplerLaw::Exponential))
        throw std::invalid_argument("batch: mono mode is undefined for single/exponential laws");
}

IndexBatch BatchStream::next() {
    IndexBatch out;
    out.indices.reserve(static_cast<size_t>(batch_.size));
    if (batch_.mode == BatchMode::Mixed) {
        out.origin = BatchOrigin::Mixed;
        for (int i = 0; i < batch_.size; ++i) out.indices.push_back(stream_.next());
        return out;
    }
    // mono: the whole batch comes from one set
    const SamplerSpec& spec = stream_.spec_;
    bool repeated = stream_.rng_.uniform() < spec.p;
    out.origin = repeated ? BatchOrigin::Repeated : BatchOrigin::Bulk;
    for (int i = 0; i < batch_.size; ++i) {
        uint64_t start = stream_.window_start();
        uint64_t idx;
        if (repeated) {
            idx = start + stream_.rng_.below(spec.S);
        } else if (spec.unlimited()) {
            idx = stream_.draw_fresh();
        } else {
            uint64_t v = stream_.rng_.below(*spec.N - spec.S);
            idx = v < start ? v : v + spec.S;
        }
        ++stream_.draws_;
        out.indices.push_back(idx);
    }
    return out;
}

double expected_repeated_repetitions(const SamplerSpec& spec, uint64_t T) {
    switch (spec.law) {
        case SamplerLaw::Single:
            if (spec.unlimited()) return 1.0;
            return static_cast<double>(T) / static_cast<double>(*spec.N);
        case SamplerLaw::TwoSet:
        case SamplerLaw::Shifting:
            return spec.p * static_cast<double>(T) / static_cast<double>(spec.S);
        case SamplerLaw::Exponential:
            throw std::invalid_argument("expected_repeated_repetitions: not defined for exponential");
    }
    throw std::logic_error("unhandled law");
}

double expected_bulk_repetitions(const SamplerSpec& spec, uint64_t T) {
    if (spec.law != SamplerLaw::TwoSet && spec.law != SamplerLaw::Shifting)
        throw std::invalid_argument("expected_bulk_repetitions: defined for two-set/shifting only");
    if (spec.unlimited()) return 1.0;
    return (1.0 - spec.p) * static_cast<double>(T) / static_cast<double>(*spec.N - spec.S);
}

FrequencyReport audit_frequencies(const SamplerSpec& spec, uint64_t T, uint64_t seed) {
    spec.validate();
    if (T < 1) throw std::invalid_argument("audit_frequencies: T must be >= 1");

    FrequencyReport rep;
    rep.total_draws = T;
    switch (spec.law) {
        case SamplerLaw::Single: rep.region_boundary = spec.N.value_or(0); break;
        case SamplerLaw::TwoSet:
        case SamplerLaw::Shifting: rep.region_boundary = spec.S; break;
        case SamplerLaw::Exponential: rep.region_boundary = beta_to_s_eff(spec.beta, *spec.N); break;
    }

    constexpr uint64_t kMaxCounted = 1u << 26;
    std::vector<uint32_t> counts;
    bool per_index = rep.region_boundary > 0 && rep.region_boundary <= kMaxCounted;
    if (per_index) counts.assign(rep.region_boundary, 0);

    IndexStream stream(spec, seed);
    bool shifting = spec.law == SamplerLaw::Shifting;
    for (uint64_t t = 0; t < T; ++t) {
        uint64_t start = shifting ? stream.window_start() : 0; // current repeated window
        uint64_t idx = stream.next();
        if (idx >= start && idx - start < rep.region_boundary) {
            ++rep.repeated_draws;
            if (per_index) ++counts[idx - start];
        }
    }

    rep.repeated_mass = static_cast<double>(rep.repeated_draws) / static_cast<double>(T);
    if (rep.region_boundary > 0)
        rep.mean_repeated_repetitions =
            static_cast<double>(rep.repeated_draws) / static_cast<double>(rep.region_boundary);
    for (uint32_t c : counts) rep.max_repeated_repetitions = std::max<uint64_t>(rep.max_repeated_repetitions, c);
    if (spec.N && *spec.N > rep.region_boundary)
        rep.mean_bulk_repetitions = static_cast<double>(T - rep.repeated_draws) /
                                    static_cast<double>(*spec.N - rep.region_boundary);
    return rep;
}

std::string FrequencyReport::table() const {
    std::ostringstream os;
    os << "region\tdraws\tmass\tmean_repetition\n";
    os << "repeated\t" << repeated_draws << '\t' << repeated_mass << '\t' << mean_repeated_repetitions
       << '\n';
    os << "bulk\t" << (total_draws - repeated_draws) << '\t'
       << (1.0 - repeated_mass) << '\t' << mean_bulk_repetitions << '\n';
    os << "total\t" << total_draws << "\t1\t-\n";
    os << "# boundary " << region_boundary << ", max repeated repetitions " << max_repeated_repetitions
       << '\n';
    return os.str();
}

} // namespace repbench
