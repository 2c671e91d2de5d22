#include "repbench/trainloop.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace repbench {

namespace {
constexpr uint64_t kDataTag = 0x44415441;
constexpr uint64_t kModelTag = 0x4d4f444c;
constexpr uint64_t kDropTag = 0x44524f50;
constexpr uint64_t kLossSetTag = 0x4c4f5353;
} // namespace

void DatasetSpec::validate() const {
    if (data_budget && *data_budget == 0)
        throw std::invalid_argument("data_budget must be positive or unlimited");
    bulk.validate();
    if (repeated) {
        repeated->validate();
        if (repeated_size == 0)
            throw std::invalid_argument("repeated_size must be positive with a repeated curation");
        if (data_budget && repeated_size >= *data_budget)
            throw std::invalid_argument("repeated_size must be smaller than data_budget");
    }
    if (task == TaskKind::Eigen && (matrix_dim < 2 || matrix_dim > 12))
        throw std::invalid_argument("matrix_dim must lie in [2, 12]");
}

Dataset::Dataset(DatasetSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

TaskExample Dataset::example(uint64_t index) const {
    if (spec_.data_budget && index >= *spec_.data_budget)
        throw std::out_of_range("dataset: index beyond data budget");
    Rng rng(derive_seed(spec_.seed, kDataTag, index));
    const CurationSpec& curation =
        (spec_.repeated && index < spec_.repeated_size) ? *spec_.repeated : spec_.bulk;
    switch (spec_.task) {
        case TaskKind::Gcd: return make_gcd_example(rng, curation);
        case TaskKind::ModMul: return make_modmul_example(rng, curation);
        case TaskKind::Eigen: return make_eigen_example(rng, spec_.matrix_dim);
    }
    throw std::logic_error("dataset: unhandled task");
}

std::pair<TokenSeq, TokenSeq> Dataset::sequences(uint64_t index) const {
    return build_sequences(spec_.task, example(index));
}

int task_max_src_len(TaskKind task, int matrix_dim) {
    switch (task) {
        case TaskKind::Gcd:
        case TaskKind::ModMul: return 8; // SEP d d d SEP d d d at the 1e6 boundary
        case TaskKind::Eigen: return 3 * matrix_dim * matrix_dim;
    }
    return 0;
}

int task_max_tgt_len(TaskKind task, int matrix_dim) {
    switch (task) {
        case TaskKind::Gcd: return 4; // up to three digits plus EOS
        case TaskKind::ModMul: return 2;
        case TaskKind::Eigen: return 3 * matrix_dim + 1;
    }
    return 0;
}

void RunConfig::validate() const {
    if (run_id.empty()) throw std::invalid_argument("run_id must not be empty");
    dataset.validate();
    sampler.validate();
    model.validate();
    optim.validate();
    if (batch.size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (training_budget < eval_cadence)
        throw std::invalid_argument("training_budget must be >= eval_cadence");
    if (eval_cadence < static_cast<uint64_t>(batch.size))
        throw std::invalid_argument("eval_cadence must be >= batch_size");
    if (task != dataset.task) throw std::invalid_argument("task must match dataset task");
    if (dataset.data_budget != sampler.N)
        throw std::invalid_argument("data_budget must match the sampler's N");
    if (dataset.repeated && dataset.repeated_size != sampler.S)
        throw std::invalid_argument("repeated_size must equal the sampler's S");
    if (model.max_src_len < task_max_src_len(task, dataset.matrix_dim))
        throw std::invalid_argument("max_src_len too small for the task");
    if (model.max_tgt_len < task_max_tgt_len(task, dataset.matrix_dim))
        throw std::invalid_argument("max_tgt_len too small for the task");
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must lie in [0, 1]");
    if (gcd_per_class < 1) throw std::invalid_argument("gcd_per_class must be >= 1");
    if (eval_samples < 1) throw std::invalid_argument("eval_samples must be >= 1");
    if (test_loss_samples < 1) throw std::invalid_argument("test_loss_samples must be >= 1");
}

std::optional<int> detect_overfit(const std::vector<CurvePoint>& curve, int window) {
    if (window < 2) throw std::invalid_argument("detect_overfit: window must be >= 2");
    int n = static_cast<int>(curve.size());
    if (n < 2 * window) return std::nullopt;

    auto slope = [&](auto&& value, int last) {
        double xm = 0.0, ym = 0.0;
        for (int i = last - window + 1; i <= last; ++i) {
            xm += static_cast<double>(curve[i].examples_consumed);
            ym += value(curve[i]);
        }
        xm /= window;
        ym /= window;
        double num = 0.0, den = 0.0;
        for (int i = last - window + 1; i <= last; ++i) {
            double dx = static_cast<double>(curve[i].examples_consumed) - xm;
            num += dx * (value(curve[i]) - ym);
            den += dx * dx;
        }
        return den > 0.0 ? num / den : 0.0;
    };
    auto overfitting = [&](int j) {
        return slope([](const CurvePoint& p) { return p.test_loss; }, j) > 0.0 &&
               slope([](const CurvePoint& p) { return p.train_loss; }, j) < 0.0;
    };

    for (int j = window; j < n; ++j)
        if (overfitting(j - 1) && overfitting(j)) return j - 1;
    return std::nullopt;
}

std::vector<ThresholdCrossing> detect_thresholds(const std::vector<CurvePoint>& curve,
                                                 const std::vector<double>& levels) {
    std::vector<ThresholdCrossing> out;
    out.reserve(levels.size());
    for (double level : levels) {
        ThresholdCrossing c;
        c.level = level;
        for (const auto& p : curve)
            if (p.metric >= level) {
                c.examples_consumed = p.examples_consumed;
                break;
            }
        out.push_back(c);
    }
    return out;
}

Trainer::Trainer(RunConfig config)
    : cfg_([&] {
          config.validate();
          config.dataset.seed = derive_seed(config.seed, kDataTag);
          return config;
      }()),
      dataset_(cfg_.dataset),
      model_(cfg_.model),
      state_(init_model<float>(cfg_.model, derive_seed(cfg_.seed, kModelTag))),
      optim_(OptimState<float>::zeros_like(state_.tensors)),
      grads_(zero_grads(state_)),
      dropout_rng_(derive_seed(cfg_.seed, kDropTag)),
      batches_(cfg_.sampler, cfg_.batch, cfg_.seed) {
    if (cfg_.task == TaskKind::Gcd) {
        gcd_testset_ = gcd_class_testset(cfg_.eval_seed, cfg_.gcd_per_class);
        CurationSpec uniform;
        for (int i = 0; i < cfg_.test_loss_samples; ++i) {
            Rng rng(derive_seed(cfg_.eval_seed, kLossSetTag, static_cast<uint64_t>(i)));
            auto [src, tgt] = build_sequences(TaskKind::Gcd, TaskExample(make_gcd_example(rng, uniform)));
            loss_srcs_.push_back(std::move(src));
            loss_tgts_.push_back(std::move(tgt));
        }
    }
}

std::string Trainer::checkpoint_path() const { return cfg_.out_dir + "/" + cfg_.run_id + ".ckpt"; }

void Trainer::write_checkpoint() const {
    TrainerCheckpointState t;
    t.sampler_rng_counter = batches_.stream().rng_counter();
    t.sampler_draws = batches_.stream().draws();
    t.sampler_fresh = batches_.stream().fresh_counter();
    t.examples_consumed = consumed_;
    t.eval_ordinal = eval_ordinal_;
    t.train_loss_sum = train_loss_sum_;
    t.train_loss_batches = train_loss_batches_;
    t.dropout_rng_counter = dropout_rng_.counter();
    save_checkpoint(checkpoint_path(), state_, &optim_, &t);
}

Trainer Trainer::resume(RunConfig config, const std::string& path) {
    Trainer t(std::move(config));
    LoadedCheckpoint ckpt = load_checkpoint(path);
    if (!ckpt.optim || !ckpt.trainer)
        throw std::runtime_error("resume: checkpoint lacks optimizer or trainer state");
    if (ckpt.model.tensors.size() != t.state_.tensors.size())
        throw std::runtime_error("resume: checkpoint does not match the model config");
    t.state_ = std::move(ckpt.model);
    t.optim_ = std::move(*ckpt.optim);
    const auto& ts = *ckpt.trainer;
    t.batches_.stream().restore(ts.sampler_rng_counter, ts.sampler_draws, ts.sampler_fresh);
    t.consumed_ = ts.examples_consumed;
    t.eval_ordinal_ = ts.eval_ordinal;
    t.train_loss_sum_ = ts.train_loss_sum;
    t.train_loss_batches_ = ts.train_loss_batches;
    t.dropout_rng_.seek(ts.dropout_rng_counter);
    return t;
}

CurvePoint Trainer::evaluate(double wall_seconds) {
    CurvePoint point;
    point.examples_consumed = consumed_;
    point.train_loss = train_loss_batches_ > 0 ? train_loss_sum_ / train_loss_batches_ : 0.0;
    point.wall_seconds = wall_seconds;
    train_loss_sum_ = 0.0;
    train_loss_batches_ = 0;

    int max_len = task_max_tgt_len(cfg_.task, cfg_.dataset.matrix_dim);
    ModelPredictor predictor(model_, state_, max_len);
    uint64_t eval_seed_i = derive_seed(cfg_.eval_seed, eval_ordinal_);

    std::vector<TokenSeq> srcs, tgts;
    if (cfg_.task == TaskKind::Gcd) {
        point.metric = eval_gcd(predictor, gcd_testset_, cfg_.tau).metric();
        srcs = loss_srcs_;
        tgts = loss_tgts_;
    } else {
        CurationSpec uniform;
        if (cfg_.task == TaskKind::ModMul) {
            point.metric = eval_modmul(predictor, eval_seed_i, cfg_.eval_samples).accuracy;
            for (int i = 0; i < cfg_.test_loss_samples; ++i) {
                Rng rng(derive_seed(eval_seed_i, kLossSetTag, static_cast<uint64_t>(i)));
                auto [s, t] =
                    build_sequences(cfg_.task, TaskExample(make_modmul_example(rng, uniform)));
                srcs.push_back(std::move(s));
                tgts.push_back(std::move(t));
            }
        } else {
            point.metric =
                eval_eigen(predictor, eval_seed_i, cfg_.eval_samples, cfg_.dataset.matrix_dim).accuracy;
            for (int i = 0; i < cfg_.test_loss_samples; ++i) {
                Rng rng(derive_seed(eval_seed_i, kLossSetTag, static_cast<uint64_t>(i)));
                auto [s, t] =
                    build_sequences(cfg_.task, TaskExample(make_eigen_example(rng, cfg_.dataset.matrix_dim)));
                srcs.push_back(std::move(s));
                tgts.push_back(std::move(t));
            }
        }
    }

    // test loss: mean of per-batch mean CE, weighted by batch size
    double loss_sum = 0.0;
    size_t counted = 0;
    constexpr size_t kChunk = 256;
    for (size_t at = 0; at < srcs.size(); at += kChunk) {
        size_t n = std::min(kChunk, srcs.size() - at);
        std::vector<TokenSeq> cs(srcs.begin() + at, srcs.begin() + at + n);
        std::vector<TokenSeq> ct(tgts.begin() + at, tgts.begin() + at + n);
        TokenBatch batch = make_token_batch(cs, ct);
        loss_sum += model_.loss(state_, batch, nullptr) * static_cast<double>(n);
        counted += n;
    }
    point.test_loss = loss_sum / static_cast<double>(counted);

    ++eval_ordinal_;
    return point;
}

RunResult Trainer::run(std::optional<uint64_t> stop_after,
                       const std::function<void(const CurvePoint&)>& on_point) {
    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    const uint64_t bs = static_cast<uint64_t>(cfg_.batch.size);
    const uint64_t budget = (cfg_.training_budget / bs) * bs; // partial trailing batch dropped
    uint64_t cap = budget;
    if (stop_after) cap = std::min(cap, (*stop_after / bs) * bs);

    RunResult result;
    std::vector<TokenSeq> srcs(bs), tgts(bs);
    uint64_t last_checkpoint = consumed_;
    while (consumed_ < cap) {
        IndexBatch indices = batches_.next();
        for (uint64_t i = 0; i < bs; ++i) {
            auto [s, t] = dataset_.sequences(indices.indices[i]);
            srcs[i] = std::move(s);
            tgts[i] = std::move(t);
        }
        TokenBatch batch = make_token_batch(srcs, tgts);
        for (auto& g : grads_) g.setZero();
        double loss = model_.loss(state_, batch, &grads_, &dropout_rng_);
        optim_step(cfg_.optim, optim_, state_, grads_);
        train_loss_sum_ += loss;
        ++train_loss_batches_;
        consumed_ += bs;

        if (consumed_ / cfg_.eval_cadence > eval_ordinal_) {
            CurvePoint p = evaluate(wall());
            result.curve.push_back(p);
            if (on_point) on_point(p);
        }
        if (cfg_.checkpoint_every > 0 && consumed_ - last_checkpoint >= cfg_.checkpoint_every) {
            write_checkpoint();
            last_checkpoint = consumed_;
        }
    }

    bool finished = consumed_ >= budget;
    if (finished && (result.curve.empty() || result.curve.back().examples_consumed < consumed_)) {
        CurvePoint p = evaluate(wall());
        result.curve.push_back(p);
        if (on_point) on_point(p);
    }
    write_checkpoint();

    result.thresholds = detect_thresholds(result.curve);
    result.overfit_index = detect_overfit(result.curve);
    result.final_metric = result.curve.empty() ? 0.0 : result.curve.back().metric;
    result.checkpoint_path = checkpoint_path();
    result.skipped_steps = optim_.skipped_steps;
    return result;
}

} // namespace repbench
