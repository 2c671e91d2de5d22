#include "repbench/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace repbench {

const char* optim_name(OptimKind kind) { return kind == OptimKind::Adam ? "adam" : "adamw"; }

std::optional<OptimKind> optim_from_name(const std::string& name) {
    if (name == "adam") return OptimKind::Adam;
    if (name == "adamw") return OptimKind::AdamW;
    return std::nullopt;
}

void OptimSpec::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0) throw std::invalid_argument("optimizer: beta1 must lie in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("optimizer: beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
}

template <typename T>
bool optim_step(const OptimSpec& spec, OptimState<T>& state, std::vector<Mat<T>>& params,
                const std::vector<Mat<T>>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("optimizer: tensor list shapes do not match");

    for (const auto& g : grads)
        if (!g.allFinite()) {
            ++state.skipped_steps;
            return false;
        }

    ++state.step_count;
    const T b1 = static_cast<T>(spec.beta1);
    const T b2 = static_cast<T>(spec.beta2);
    const T eps = static_cast<T>(spec.epsilon);
    const T lr = static_cast<T>(spec.learning_rate);
    const T wd = static_cast<T>(spec.weight_decay);
    const T bc1 = static_cast<T>(1.0 - std::pow(spec.beta1, static_cast<double>(state.step_count)));
    const T bc2 = static_cast<T>(1.0 - std::pow(spec.beta2, static_cast<double>(state.step_count)));

    for (size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].array();
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        if (spec.kind == OptimKind::AdamW && wd != static_cast<T>(0)) p -= lr * wd * p;
        if (spec.kind == OptimKind::Adam && wd != static_cast<T>(0)) {
            auto g = grads[i].array() + wd * p;
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g.square();
        } else {
            auto g = grads[i].array();
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g.square();
        }
        p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
    return true;
}

template bool optim_step<float>(const OptimSpec&, OptimState<float>&, std::vector<Mat<float>>&,
                                const std::vector<Mat<float>>&);
template bool optim_step<double>(const OptimSpec&, OptimState<double>&, std::vector<Mat<double>>&,
                                 const std::vector<Mat<double>>&);

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "gradcheck: " << entries.size() << " sampled parameters, max relative error "
       << max_rel_error << " (denominator floor " << denom_floor << ")\n";
    for (const auto& e : entries)
        if (e.rel_error == max_rel_error) {
            os << "  worst: " << e.tensor << '[' << e.row << ',' << e.col << "] analytic "
               << e.analytic << " numeric " << e.numeric << '\n';
            break;
        }
    return os.str();
}

GradCheckReport grad_check(const ModelConfig& cfg, const TokenBatch& batch, int sample_count,
                           double step_size, uint64_t seed, double denom_floor, double loss_scale) {
    if (sample_count < 1) throw std::invalid_argument("gradcheck: sample_count must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("gradcheck: step_size must be positive");

    ModelState<double> state = init_model<double>(cfg, seed);
    Transformer<double> model(cfg);

    auto grads = zero_grads(state);
    model.loss(state, batch, &grads, nullptr);
    if (loss_scale != 1.0)
        for (auto& g : grads) g *= loss_scale;

    int64_t total = state.parameter_count();
    Rng rng(derive_seed(seed, 0x47434b53));

    GradCheckReport report;
    report.denom_floor = denom_floor;
    report.entries.reserve(static_cast<size_t>(sample_count));
    for (int s = 0; s < sample_count; ++s) {
        int64_t flat = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
        size_t ti = 0;
        while (flat >= state.tensors[ti].size()) flat -= state.tensors[ti++].size();
        int row = static_cast<int>(flat / state.tensors[ti].cols());
        int col = static_cast<int>(flat % state.tensors[ti].cols());

        double w0 = state.tensors[ti](row, col);
        state.tensors[ti](row, col) = w0 + step_size;
        double lp = model.loss(state, batch, nullptr) * loss_scale;
        state.tensors[ti](row, col) = w0 - step_size;
        double lm = model.loss(state, batch, nullptr) * loss_scale;
        state.tensors[ti](row, col) = w0;

        GradCheckEntry e;
        e.tensor = state.layout.infos[ti].name;
        e.row = row;
        e.col = col;
        e.analytic = grads[ti](row, col);
        e.numeric = (lp - lm) / (2.0 * step_size);
        double denom = std::max({std::fabs(e.analytic), std::fabs(e.numeric), denom_floor});
        e.rel_error = std::fabs(e.analytic - e.numeric) / denom;
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        report.entries.push_back(std::move(e));
    }
    return report;
}

} // namespace repbench
