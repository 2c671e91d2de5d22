#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "repbench/rng.hpp"

namespace repbench {

constexpr uint64_t kMaxInput = 1000000; // task inputs live in [1, 1e6]
constexpr int kModulus = 67;

struct IntPair {
    uint32_t a = 1;
    uint32_t b = 1;
};

struct GcdExample {
    IntPair pair;
    uint32_t g = 1;
};

struct ModMulExample {
    IntPair pair;
    int r = 0;
};

// Dense row-major symmetric matrix with entries rounded to 3 significant digits.
struct SymMatrix {
    int n = 0;
    std::vector<double> entries; // n*n, entries[i*n+j]

    double at(int i, int j) const { return entries[static_cast<size_t>(i) * n + j]; }
    double& at(int i, int j) { return entries[static_cast<size_t>(i) * n + j]; }
};

struct EigenExample {
    SymMatrix matrix;
    std::vector<double> eigenvalues; // descending, rounded to 3 significant digits
};

enum class TaskKind { Gcd, ModMul, Eigen };

const char* task_name(TaskKind t);
std::optional<TaskKind> task_from_name(const std::string& name);

using TaskExample = std::variant<GcdExample, ModMulExample, EigenExample>;

// How training pairs are drawn. Uniform is the base law; the others implement
// the curated repeated-set regimes.
struct CurationSpec {
    enum class Kind {
        Uniform,
        LogUniformInputs,
        UniformGcd,
        LogUniformInputsAndGcd,
        InputRange, // both operands uniform on [lo, hi]
        GcdInSet,
        GcdNotInSet,
    };
    Kind kind = Kind::Uniform;
    uint64_t lo = 1, hi = kMaxInput; // InputRange
    std::vector<int> gcd_set;        // GcdInSet / GcdNotInSet, values in [1, 100]

    void validate() const; // throws std::invalid_argument naming the bad field
    std::string describe() const;
};

CurationSpec parse_curation(const std::string& text); // e.g. "gcd-in-set:2,5"

// --- Oracles ---------------------------------------------------------------

// Euclid's algorithm; rejects zero arguments.
uint64_t gcd_oracle(uint64_t a, uint64_t b);

// (a*b) mod m without intermediate overflow (product fits in 64 bits here).
int modmul_oracle(uint64_t a, uint64_t b, int modulus = kModulus);

// Full Jacobi decomposition, kept unrounded so callers can certify residuals.
struct JacobiResult {
    std::vector<double> values;  // descending, unrounded
    std::vector<double> vectors; // n*n row-major; column i pairs with values[i]
    int sweeps = 0;
};

// Cyclic Jacobi; converges when the off-diagonal Frobenius mass falls below
// 1e-12 * ||m||_F. Throws std::runtime_error after max_sweeps.
JacobiResult jacobi_symmetric_eigen(const SymMatrix& m, int max_sweeps = 50);

// Eigenvalues sorted descending, each rounded to 3 significant digits.
std::vector<double> eigen_oracle(const SymMatrix& m);

// --- Generators ------------------------------------------------------------

// Consecutive rejections allowed for the gcd-predicate curations.
constexpr uint64_t kRejectionCap = 1000000;

IntPair sample_pair(Rng& rng, const CurationSpec& curation);

// Cofactor construction: (g*a', g*b') with coprime a', b' uniform on
// [1, floor(1e6/g)]. Exact gcd by construction.
IntPair build_pair_with_gcd(Rng& rng, uint64_t g);

// Upper triangle i.i.d. uniform on [-10, 10], mirrored, 3-significant-digit
// rounded.
SymMatrix gen_sym_matrix(Rng& rng, int n);

GcdExample make_gcd_example(Rng& rng, const CurationSpec& curation);
ModMulExample make_modmul_example(Rng& rng, const CurationSpec& curation, int modulus = kModulus);
EigenExample make_eigen_example(Rng& rng, int n);

// per_class pairs for every gcd class 1..100, class-major order, reproducible
// from seed.
std::vector<GcdExample> gcd_class_testset(uint64_t seed, int per_class = 1000);

// One record per line: task id, raw inputs, raw target, seed, index.
std::string export_record(TaskKind task, const TaskExample& ex, uint64_t seed, uint64_t index);

} // namespace repbench
