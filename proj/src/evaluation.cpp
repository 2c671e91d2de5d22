#include "repbench/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace repbench {

namespace {

constexpr uint64_t kEvalTag = 0x4556414c;

std::span<const int32_t> strip_eos(const TokenSeq& seq) {
    std::span<const int32_t> s(seq);
    if (!s.empty() && s.back() == vocab::EOS) s = s.subspan(0, s.size() - 1);
    return s;
}

std::optional<std::pair<uint64_t, uint64_t>> parse_pair_source(const TokenSeq& src) {
    if (src.size() < 4 || src[0] != vocab::SEP) return std::nullopt;
    size_t second = 0;
    for (size_t i = 1; i < src.size(); ++i)
        if (src[i] == vocab::SEP) {
            second = i;
            break;
        }
    if (second == 0) return std::nullopt;
    auto a = decode_uint(std::span<const int32_t>(src).subspan(1, second - 1));
    auto b = decode_uint(std::span<const int32_t>(src).subspan(second + 1));
    if (!a || !b) return std::nullopt;
    return std::make_pair(*a, *b);
}

} // namespace

std::vector<TokenSeq> ModelPredictor::predict(const std::vector<TokenSeq>& srcs) {
    std::vector<TokenSeq> out;
    out.reserve(srcs.size());
    for (size_t at = 0; at < srcs.size(); at += static_cast<size_t>(decode_batch_)) {
        size_t n = std::min(static_cast<size_t>(decode_batch_), srcs.size() - at);
        std::vector<TokenSeq> chunk(srcs.begin() + at, srcs.begin() + at + n);
        auto decoded = model_.greedy_decode_batch(state_, chunk, max_len_);
        for (auto& d : decoded) out.push_back(std::move(d));
    }
    return out;
}

std::vector<TokenSeq> OraclePredictor::predict(const std::vector<TokenSeq>& srcs) {
    std::vector<TokenSeq> out;
    out.reserve(srcs.size());
    for (const auto& src : srcs) {
        TokenSeq tgt;
        if (task_ == TaskKind::Gcd || task_ == TaskKind::ModMul) {
            auto pair = parse_pair_source(src);
            if (!pair) throw std::invalid_argument("oracle predictor: malformed pair source");
            if (task_ == TaskKind::Gcd) {
                append_uint(gcd_oracle(pair->first, pair->second), tgt);
            } else {
                tgt.push_back(vocab::digit(modmul_oracle(pair->first, pair->second)));
            }
        } else {
            auto entries = decode_float_list(src);
            if (!entries) throw std::invalid_argument("oracle predictor: malformed matrix source");
            int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(entries->size()))));
            if (static_cast<size_t>(n) * n != entries->size())
                throw std::invalid_argument("oracle predictor: source is not a square matrix");
            SymMatrix m;
            m.n = n;
            m.entries = *entries;
            for (double v : eigen_oracle(m)) append_float(v, tgt);
        }
        tgt.push_back(vocab::EOS);
        out.push_back(std::move(tgt));
    }
    return out;
}

GcdReport eval_gcd(Predictor& predictor, const std::vector<GcdExample>& testset, double tau,
                   std::ostream* dump) {
    if (testset.empty()) throw std::invalid_argument("eval_gcd: empty test set");
    std::vector<TokenSeq> srcs;
    srcs.reserve(testset.size());
    for (const auto& ex : testset) srcs.push_back(build_sequences(TaskKind::Gcd, ex).first);
    auto preds = predictor.predict(srcs);

    std::vector<int64_t> correct(101, 0), total(101, 0);
    for (size_t i = 0; i < testset.size(); ++i) {
        uint32_t g = testset[i].g;
        if (g < 1 || g > 100) throw std::invalid_argument("eval_gcd: class outside [1, 100]");
        auto decoded = decode_uint(strip_eos(preds[i]));
        bool ok = decoded && *decoded == g;
        ++total[g];
        if (ok) ++correct[g];
        if (dump)
            (*dump) << testset[i].pair.a << ' ' << testset[i].pair.b << ' ' << g << ' '
                    << (decoded ? std::to_string(*decoded) : "?") << ' ' << (ok ? 1 : 0) << '\n';
    }

    GcdReport rep;
    rep.tau = tau;
    rep.per_class_accuracy.resize(100, 0.0);
    for (int g = 1; g <= 100; ++g) {
        if (total[g] == 0) continue;
        rep.per_class_accuracy[g - 1] = static_cast<double>(correct[g]) / static_cast<double>(total[g]);
        if (rep.per_class_accuracy[g - 1] >= tau) ++rep.correct_count;
    }
    return rep;
}

AccuracyReport eval_modmul(Predictor& predictor, uint64_t seed, int n, std::ostream* dump) {
    if (n < 1) throw std::invalid_argument("eval_modmul: n must be >= 1");
    std::vector<ModMulExample> examples;
    examples.reserve(static_cast<size_t>(n));
    std::vector<TokenSeq> srcs;
    srcs.reserve(static_cast<size_t>(n));
    CurationSpec uniform;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, kEvalTag, static_cast<uint64_t>(i)));
        examples.push_back(make_modmul_example(rng, uniform));
        srcs.push_back(build_sequences(TaskKind::ModMul, examples.back()).first);
    }
    auto preds = predictor.predict(srcs);

    int correct = 0;
    for (int i = 0; i < n; ++i) {
        auto decoded = decode_uint(strip_eos(preds[i]));
        bool ok = decoded && *decoded == static_cast<uint64_t>(examples[i].r);
        if (ok) ++correct;
        if (dump)
            (*dump) << examples[i].pair.a << ' ' << examples[i].pair.b << ' ' << examples[i].r << ' '
                    << (decoded ? std::to_string(*decoded) : "?") << ' ' << (ok ? 1 : 0) << '\n';
    }
    return AccuracyReport{static_cast<double>(correct) / n, n};
}

AccuracyReport eval_eigen(Predictor& predictor, uint64_t seed, int n, int matrix_dim,
                          std::ostream* dump) {
    if (n < 1) throw std::invalid_argument("eval_eigen: n must be >= 1");
    std::vector<std::vector<double>> truths;
    truths.reserve(static_cast<size_t>(n));
    std::vector<TokenSeq> srcs;
    srcs.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, kEvalTag, static_cast<uint64_t>(i)));
        EigenExample ex = make_eigen_example(rng, matrix_dim);
        truths.push_back(ex.eigenvalues);
        srcs.push_back(build_sequences(TaskKind::Eigen, ex).first);
    }
    auto preds = predictor.predict(srcs);

    int correct = 0;
    for (int i = 0; i < n; ++i) {
        auto values = decode_float_list(strip_eos(preds[i]));
        bool ok = false;
        if (values && values->size() == truths[i].size()) {
            std::sort(values->begin(), values->end(), std::greater<double>());
            double err = 0.0, norm = 0.0;
            for (size_t j = 0; j < truths[i].size(); ++j) {
                err += std::fabs((*values)[j] - truths[i][j]);
                norm += std::fabs(truths[i][j]);
            }
            ok = norm > 0.0 && err / norm < 0.05;
        }
        if (ok) ++correct;
        if (dump) {
            (*dump) << matrix_dim << 'x' << matrix_dim;
            for (double v : truths[i]) (*dump) << ' ' << v;
            (*dump) << " ->";
            if (values)
                for (double v : *values) (*dump) << ' ' << v;
            else
                (*dump) << " ?";
            (*dump) << ' ' << (ok ? 1 : 0) << '\n';
        }
    }
    return AccuracyReport{static_cast<double>(correct) / n, n};
}

double exact_match(Predictor& predictor, const std::vector<TokenSeq>& srcs,
                   const std::vector<TokenSeq>& tgts) {
    if (srcs.size() != tgts.size() || srcs.empty())
        throw std::invalid_argument("exact_match: sources and targets must be nonempty and aligned");
    auto preds = predictor.predict(srcs);
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == tgts[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(srcs.size());
}

} // namespace repbench
