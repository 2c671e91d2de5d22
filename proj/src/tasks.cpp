#include "repbench/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "repbench/decimal.hpp"

namespace repbench {

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::Gcd: return "gcd";
        case TaskKind::ModMul: return "modmul";
        case TaskKind::Eigen: return "eigen";
    }
    return "?";
}

std::optional<TaskKind> task_from_name(const std::string& name) {
    if (name == "gcd") return TaskKind::Gcd;
    if (name == "modmul") return TaskKind::ModMul;
    if (name == "eigen") return TaskKind::Eigen;
    return std::nullopt;
}

void CurationSpec::validate() const {
    if (kind == Kind::InputRange) {
        if (lo < 1 || lo > hi || hi > kMaxInput)
            throw std::invalid_argument("curation: input-range requires 1 <= lo <= hi <= 1e6");
    }
    if (kind == Kind::GcdInSet || kind == Kind::GcdNotInSet) {
        if (gcd_set.empty()) throw std::invalid_argument("curation: gcd_set is empty");
        for (int g : gcd_set)
            if (g < 1 || g > 100) throw std::invalid_argument("curation: gcd_set values must lie in [1, 100]");
    }
}

std::string CurationSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Uniform: return "uniform";
        case Kind::LogUniformInputs: return "log-uniform-inputs";
        case Kind::UniformGcd: return "uniform-gcd";
        case Kind::LogUniformInputsAndGcd: return "log-uniform-inputs-and-gcd";
        case Kind::InputRange:
            os << "input-range:" << lo << ".." << hi;
            return os.str();
        case Kind::GcdInSet:
        case Kind::GcdNotInSet:
            os << (kind == Kind::GcdInSet ? "gcd-in-set:" : "gcd-not-in-set:");
            for (size_t i = 0; i < gcd_set.size(); ++i) os << (i ? "," : "") << gcd_set[i];
            return os.str();
    }
    return "?";
}

CurationSpec parse_curation(const std::string& text) {
    CurationSpec spec;
    auto colon = text.find(':');
    std::string head = text.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "uniform") {
        spec.kind = CurationSpec::Kind::Uniform;
    } else if (head == "log-uniform-inputs") {
        spec.kind = CurationSpec::Kind::LogUniformInputs;
    } else if (head == "uniform-gcd") {
        spec.kind = CurationSpec::Kind::UniformGcd;
    } else if (head == "log-uniform-inputs-and-gcd") {
        spec.kind = CurationSpec::Kind::LogUniformInputsAndGcd;
    } else if (head == "input-range") {
        spec.kind = CurationSpec::Kind::InputRange;
        auto dots = rest.find("..");
        if (dots == std::string::npos) throw std::invalid_argument("curation: input-range wants lo..hi");
        spec.lo = std::stoull(rest.substr(0, dots));
        spec.hi = std::stoull(rest.substr(dots + 2));
    } else if (head == "gcd-in-set" || head == "gcd-not-in-set") {
        spec.kind = head == "gcd-in-set" ? CurationSpec::Kind::GcdInSet : CurationSpec::Kind::GcdNotInSet;
        std::istringstream is(rest);
        std::string item;
        while (std::getline(is, item, ',')) {
            if (!item.empty()) spec.gcd_set.push_back(std::stoi(item));
        }
    } else {
        throw std::invalid_argument("curation: unknown kind '" + head + "'");
    }
    spec.validate();
    return spec;
}

// --- Oracles ---------------------------------------------------------------

uint64_t gcd_oracle(uint64_t a, uint64_t b) {
    if (a == 0 || b == 0) throw std::invalid_argument("gcd_oracle: arguments must be >= 1");
    while (b != 0) {
        uint64_t t = a % b;
        a = b;
        b = t;
    }
    return a;
}

int modmul_oracle(uint64_t a, uint64_t b, int modulus) {
    if (modulus <= 0) throw std::invalid_argument("modmul_oracle: modulus must be positive");
    // a, b <= 1e6 so the product fits a u64 with room to spare.
    return static_cast<int>((a * b) % static_cast<uint64_t>(modulus));
}

namespace {

double frobenius(const SymMatrix& m) {
    double s = 0.0;
    for (double v : m.entries) s += v * v;
    return std::sqrt(s);
}

double offdiag_frobenius(const std::vector<double>& a, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = a[static_cast<size_t>(i) * n + j];
            s += 2.0 * v * v;
        }
    return std::sqrt(s);
}

} // namespace

JacobiResult jacobi_symmetric_eigen(const SymMatrix& m, int max_sweeps) {
    int n = m.n;
    if (n < 1) throw std::invalid_argument("jacobi: empty matrix");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (m.at(i, j) != m.at(j, i)) throw std::invalid_argument("jacobi: matrix is not symmetric");

    std::vector<double> a = m.entries;
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

    const double tol = 1e-12 * frobenius(m);
    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return v[static_cast<size_t>(i) * n + j]; };

    int sweep = 0;
    while (offdiag_frobenius(a, n) > tol) {
        if (sweep >= max_sweeps)
            throw std::runtime_error("jacobi: no convergence after " + std::to_string(max_sweeps) + " sweeps");
        ++sweep;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (apq == 0.0) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                if (theta < 0.0) t = -t;
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                double tau = s / (1.0 + c);
                double h = t * apq;

                A(p, p) -= h;
                A(q, q) += h;
                A(p, q) = 0.0;
                A(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i != p && i != q) {
                        double aip = A(i, p), aiq = A(i, q);
                        A(i, p) = aip - s * (aiq + aip * tau);
                        A(p, i) = A(i, p);
                        A(i, q) = aiq + s * (aip - aiq * tau);
                        A(q, i) = A(i, q);
                    }
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = vip - s * (viq + vip * tau);
                    V(i, q) = viq + s * (vip - viq * tau);
                }
            }
        }
    }

    // sort descending, carrying eigenvector columns along
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = A(i, i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] > diag[y]; });

    JacobiResult out;
    out.sweeps = sweep;
    out.values.resize(n);
    out.vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        out.values[k] = diag[order[k]];
        for (int i = 0; i < n; ++i) out.vectors[static_cast<size_t>(i) * n + k] = V(i, order[k]);
    }
    return out;
}

std::vector<double> eigen_oracle(const SymMatrix& m) {
    JacobiResult r = jacobi_symmetric_eigen(m);
    std::vector<double> vals(r.values.size());
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = round_sig3(r.values[i]);
    std::stable_sort(vals.begin(), vals.end(), std::greater<double>()); // keep non-increasing after rounding
    return vals;
}

// --- Generators ------------------------------------------------------------

namespace {

uint64_t uniform_input(Rng& rng, uint64_t lo = 1, uint64_t hi = kMaxInput) {
    return static_cast<uint64_t>(rng.range(static_cast<int64_t>(lo), static_cast<int64_t>(hi)));
}

// density ~ 1/x on [1, hi]: exponentiate a uniform draw on [0, ln hi]
uint64_t log_uniform_input(Rng& rng, uint64_t hi = kMaxInput) {
    double u = rng.uniform() * std::log(static_cast<double>(hi));
    auto x = static_cast<uint64_t>(std::floor(std::exp(u)));
    return std::min(std::max<uint64_t>(x, 1), hi);
}

bool curation_accepts(const CurationSpec& c, const IntPair& p) {
    switch (c.kind) {
        case CurationSpec::Kind::GcdInSet: {
            uint64_t g = gcd_oracle(p.a, p.b);
            return std::find(c.gcd_set.begin(), c.gcd_set.end(), static_cast<int>(g)) != c.gcd_set.end();
        }
        case CurationSpec::Kind::GcdNotInSet: {
            uint64_t g = gcd_oracle(p.a, p.b);
            return std::find(c.gcd_set.begin(), c.gcd_set.end(), static_cast<int>(g)) == c.gcd_set.end();
        }
        default: return true;
    }
}

IntPair pair_with_gcd_and_cofactor_law(Rng& rng, uint64_t g, bool log_uniform_cofactors) {
    uint64_t limit = kMaxInput / g;
    if (limit <= 1) {
        std::cerr << "[repbench] warning: g=" << g << " forces the singleton pair (g, g)\n";
        return IntPair{static_cast<uint32_t>(g), static_cast<uint32_t>(g)};
    }
    while (true) {
        uint64_t a = log_uniform_cofactors ? log_uniform_input(rng, limit) : uniform_input(rng, 1, limit);
        uint64_t b = log_uniform_cofactors ? log_uniform_input(rng, limit) : uniform_input(rng, 1, limit);
        if (gcd_oracle(a, b) == 1) return IntPair{static_cast<uint32_t>(g * a), static_cast<uint32_t>(g * b)};
    }
}

} // namespace

IntPair build_pair_with_gcd(Rng& rng, uint64_t g) {
    if (g < 1 || g > kMaxInput) throw std::invalid_argument("build_pair_with_gcd: g must lie in [1, 1e6]");
    return pair_with_gcd_and_cofactor_law(rng, g, false);
}

IntPair sample_pair(Rng& rng, const CurationSpec& curation) {
    curation.validate();
    using K = CurationSpec::Kind;
    switch (curation.kind) {
        case K::Uniform:
            return IntPair{static_cast<uint32_t>(uniform_input(rng)), static_cast<uint32_t>(uniform_input(rng))};
        case K::LogUniformInputs:
            return IntPair{static_cast<uint32_t>(log_uniform_input(rng)),
                           static_cast<uint32_t>(log_uniform_input(rng))};
        case K::UniformGcd: {
            uint64_t g = uniform_input(rng, 1, 100);
            return build_pair_with_gcd(rng, g);
        }
        case K::LogUniformInputsAndGcd: {
            // P(g) ~ 1/g on [1, 100] via inverse CDF over the normalized harmonic weights
            double h100 = 0.0;
            for (int i = 1; i <= 100; ++i) h100 += 1.0 / i;
            double u = rng.uniform() * h100;
            int g = 100;
            double acc = 0.0;
            for (int i = 1; i <= 100; ++i) {
                acc += 1.0 / i;
                if (u < acc) {
                    g = i;
                    break;
                }
            }
            return pair_with_gcd_and_cofactor_law(rng, static_cast<uint64_t>(g), true);
        }
        case K::InputRange:
            // same law as rejecting uniform pairs on the predicate, minus the rejections
            return IntPair{static_cast<uint32_t>(uniform_input(rng, curation.lo, curation.hi)),
                           static_cast<uint32_t>(uniform_input(rng, curation.lo, curation.hi))};
        case K::GcdInSet:
        case K::GcdNotInSet: {
            for (uint64_t tries = 0; tries < kRejectionCap; ++tries) {
                IntPair p{static_cast<uint32_t>(uniform_input(rng)), static_cast<uint32_t>(uniform_input(rng))};
                if (curation_accepts(curation, p)) return p;
            }
            throw std::runtime_error("sample_pair: curation '" + curation.describe() + "' rejected " +
                                     std::to_string(kRejectionCap) + " consecutive draws");
        }
    }
    throw std::logic_error("sample_pair: unhandled curation kind");
}

SymMatrix gen_sym_matrix(Rng& rng, int n) {
    if (n < 2 || n > 12) throw std::invalid_argument("gen_sym_matrix: n must lie in [2, 12]");
    SymMatrix m;
    m.n = n;
    m.entries.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double v = round_sig3(rng.uniform() * 20.0 - 10.0);
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    return m;
}

GcdExample make_gcd_example(Rng& rng, const CurationSpec& curation) {
    IntPair p = sample_pair(rng, curation);
    return GcdExample{p, static_cast<uint32_t>(gcd_oracle(p.a, p.b))};
}

ModMulExample make_modmul_example(Rng& rng, const CurationSpec& curation, int modulus) {
    IntPair p = sample_pair(rng, curation);
    return ModMulExample{p, modmul_oracle(p.a, p.b, modulus)};
}

EigenExample make_eigen_example(Rng& rng, int n) {
    EigenExample ex;
    ex.matrix = gen_sym_matrix(rng, n);
    ex.eigenvalues = eigen_oracle(ex.matrix);
    return ex;
}

std::vector<GcdExample> gcd_class_testset(uint64_t seed, int per_class) {
    if (per_class < 1) throw std::invalid_argument("gcd_class_testset: per_class must be >= 1");
    std::vector<GcdExample> out;
    out.reserve(static_cast<size_t>(per_class) * 100);
    for (uint64_t g = 1; g <= 100; ++g) {
        for (int j = 0; j < per_class; ++j) {
            Rng rng(derive_seed(seed, g, static_cast<uint64_t>(j)));
            IntPair p = build_pair_with_gcd(rng, g);
            out.push_back(GcdExample{p, static_cast<uint32_t>(g)});
        }
    }
    return out;
}

std::string export_record(TaskKind task, const TaskExample& ex, uint64_t seed, uint64_t index) {
    std::ostringstream os;
    os << task_name(task) << ' ';
    if (task == TaskKind::Gcd) {
        const auto& e = std::get<GcdExample>(ex);
        os << e.pair.a << ' ' << e.pair.b << ' ' << e.g;
    } else if (task == TaskKind::ModMul) {
        const auto& e = std::get<ModMulExample>(ex);
        os << e.pair.a << ' ' << e.pair.b << ' ' << e.r;
    } else {
        const auto& e = std::get<EigenExample>(ex);
        os << e.matrix.n;
        for (double v : e.matrix.entries) os << ' ' << v;
        for (double v : e.eigenvalues) os << ' ' << v;
    }
    os << ' ' << seed << ' ' << index;
    return os.str();
}

} // namespace repbench
