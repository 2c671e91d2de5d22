#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "repbench/trainloop.hpp"

using namespace repbench;

namespace {

RunConfig smoke_config(const std::string& run_id, uint64_t seed = 1) {
    RunConfig cfg;
    cfg.run_id = run_id;
    cfg.task = TaskKind::Gcd;
    cfg.dataset.task = TaskKind::Gcd;
    cfg.dataset.data_budget = 512;
    cfg.sampler.law = SamplerLaw::Single;
    cfg.sampler.N = 512;
    cfg.model.enc_layers = 1;
    cfg.model.dec_layers = 1;
    cfg.model.dim = 16;
    cfg.model.heads = 2;
    cfg.model.ffn_dim = 32;
    cfg.model.max_src_len = 8;
    cfg.model.max_tgt_len = 4;
    cfg.optim.learning_rate = 1e-3;
    cfg.training_budget = 128;
    cfg.eval_cadence = 64;
    cfg.seed = seed;
    cfg.gcd_per_class = 1;
    cfg.eval_samples = 50;
    cfg.test_loss_samples = 32;
    cfg.out_dir = std::filesystem::temp_directory_path().string();
    return cfg;
}

std::vector<CurvePoint> synthetic_curve(const std::vector<double>& test_losses,
                                        const std::vector<double>& train_losses,
                                        const std::vector<double>& metrics = {}) {
    std::vector<CurvePoint> curve;
    for (size_t i = 0; i < test_losses.size(); ++i) {
        CurvePoint p;
        p.examples_consumed = (i + 1) * 100;
        p.test_loss = test_losses[i];
        p.train_loss = train_losses[i];
        p.metric = metrics.empty() ? 0.0 : metrics[i];
        curve.push_back(p);
    }
    return curve;
}

} // namespace

TEST_SUITE("trainloop") {

TEST_CASE("dataset examples are pure in (seed, index) and honor the repeated curation") {
    DatasetSpec spec;
    spec.task = TaskKind::Gcd;
    spec.data_budget = 1000;
    spec.seed = 5;
    spec.repeated = parse_curation("gcd-in-set:7");
    spec.repeated_size = 10;
    Dataset ds(spec);

    for (uint64_t i = 0; i < 10; ++i) {
        auto ex = std::get<GcdExample>(ds.example(i));
        CHECK(ex.g == 7); // curated prefix
        auto again = std::get<GcdExample>(ds.example(i));
        CHECK(ex.pair.a == again.pair.a);
    }
    auto bulk = std::get<GcdExample>(ds.example(500));
    auto bulk2 = std::get<GcdExample>(ds.example(500));
    CHECK(bulk.pair.a == bulk2.pair.a);
    CHECK_THROWS_AS(ds.example(1000), std::out_of_range);
}

TEST_CASE("task sequence envelopes") {
    CHECK(task_max_src_len(TaskKind::Gcd, 5) == 8);
    CHECK(task_max_tgt_len(TaskKind::Gcd, 5) == 4);
    CHECK(task_max_tgt_len(TaskKind::ModMul, 5) == 2);
    CHECK(task_max_src_len(TaskKind::Eigen, 5) == 75);
    CHECK(task_max_tgt_len(TaskKind::Eigen, 5) == 16);
}

TEST_CASE("run config validation names the failing field") {
    RunConfig cfg = smoke_config("validate");
    cfg.training_budget = 32; // below eval_cadence
    CHECK_THROWS_WITH_AS(cfg.validate(), "training_budget must be >= eval_cadence",
                         std::invalid_argument);
    cfg = smoke_config("validate");
    cfg.eval_cadence = 32;
    CHECK_THROWS_WITH_AS(cfg.validate(), "eval_cadence must be >= batch_size", std::invalid_argument);
    cfg = smoke_config("validate");
    cfg.sampler.N = 256; // out of sync with the dataset
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("overfit detector") {
    // strictly decreasing test loss: no overfit
    std::vector<double> down{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0.9, 0.8, 0.7, 0.6};
    CHECK_FALSE(detect_overfit(synthetic_curve(down, down)).has_value());

    // V-shaped test loss with train loss monotone down
    std::vector<double> vshape, train;
    int j = 10;
    for (int i = 0; i < 25; ++i) {
        vshape.push_back(i <= j ? 10.0 - i : 10.0 - 2 * j + i);
        train.push_back(20.0 - 0.5 * i);
    }
    auto hit = detect_overfit(synthetic_curve(vshape, train));
    REQUIRE(hit.has_value());
    CHECK(*hit >= j);
    CHECK(*hit <= j + 5);

    // both increasing: divergence, not overfit
    std::vector<double> up;
    for (int i = 0; i < 20; ++i) up.push_back(1.0 + i);
    CHECK_FALSE(detect_overfit(synthetic_curve(up, up)).has_value());

    // too short for two windows
    std::vector<double> tiny{3, 2, 1};
    CHECK_FALSE(detect_overfit(synthetic_curve(tiny, tiny)).has_value());
}

TEST_CASE("threshold detector") {
    auto flat = synthetic_curve({1, 1, 1}, {1, 1, 1}, {0.03, 0.03, 0.03});
    auto none = detect_thresholds(flat);
    CHECK_FALSE(none[0].examples_consumed.has_value());
    CHECK_FALSE(none[1].examples_consumed.has_value());

    auto steps = synthetic_curve({1, 1, 1}, {1, 1, 1}, {0.03, 0.51, 0.99});
    auto crossed = detect_thresholds(steps);
    CHECK(crossed[0].examples_consumed == 200);
    CHECK(crossed[1].examples_consumed == 300);

    auto peaked = synthetic_curve({1, 1}, {1, 1}, {0.49, 0.40});
    auto missed = detect_thresholds(peaked, {0.5});
    CHECK_FALSE(missed[0].examples_consumed.has_value());
}

TEST_CASE("T=128 E=64 batch 64 yields exactly two evaluations") {
    RunConfig cfg = smoke_config("twoevals");
    Trainer trainer(cfg);
    RunResult result = trainer.run();
    REQUIRE(result.curve.size() == 2);
    CHECK(result.curve[0].examples_consumed == 64);
    CHECK(result.curve[1].examples_consumed == 128);
    CHECK(std::filesystem::exists(result.checkpoint_path));
    std::filesystem::remove(result.checkpoint_path);
}

TEST_CASE("identical config and seed reproduce the curve exactly") {
    RunConfig cfg = smoke_config("determinism", 9);
    cfg.training_budget = 256;
    RunResult a = Trainer(cfg).run();
    RunResult b = Trainer(cfg).run();
    REQUIRE(a.curve.size() == b.curve.size());
    for (size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].examples_consumed == b.curve[i].examples_consumed);
        CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
        CHECK(a.curve[i].test_loss == b.curve[i].test_loss);
        CHECK(a.curve[i].metric == b.curve[i].metric);
    }
    std::filesystem::remove(Trainer(cfg).checkpoint_path());
}

TEST_CASE("interrupted and resumed runs match the uninterrupted stream") {
    RunConfig cfg = smoke_config("resume", 13);
    cfg.training_budget = 384;
    cfg.eval_cadence = 64;

    RunResult full = Trainer(cfg).run();
    REQUIRE(full.curve.size() == 6);

    RunConfig cfg2 = cfg;
    cfg2.run_id = "resume-part";
    Trainer first(cfg2);
    RunResult head = first.run(192);
    REQUIRE(head.curve.size() == 3);
    Trainer second = Trainer::resume(cfg2, first.checkpoint_path());
    RunResult tail = second.run();
    REQUIRE(tail.curve.size() == 3);

    std::vector<CurvePoint> joined = head.curve;
    joined.insert(joined.end(), tail.curve.begin(), tail.curve.end());
    for (size_t i = 0; i < full.curve.size(); ++i) {
        CHECK(joined[i].examples_consumed == full.curve[i].examples_consumed);
        CHECK(joined[i].train_loss == full.curve[i].train_loss);
        CHECK(joined[i].test_loss == full.curve[i].test_loss);
        CHECK(joined[i].metric == full.curve[i].metric);
    }
    std::filesystem::remove(Trainer(cfg).checkpoint_path());
    std::filesystem::remove(first.checkpoint_path());
}

TEST_CASE("resume from a checkpoint taken mid evaluation interval") {
    // the running train-loss accumulator must survive the checkpoint
    RunConfig cfg = smoke_config("midresume", 3);
    cfg.training_budget = 256;
    cfg.eval_cadence = 128;

    RunResult full = Trainer(cfg).run();
    REQUIRE(full.curve.size() == 2);

    RunConfig part = cfg;
    part.run_id = "midresume-part";
    Trainer head(part);
    RunResult head_result = head.run(192); // one eval boundary plus half an interval
    REQUIRE(head_result.curve.size() == 1);
    Trainer tail = Trainer::resume(part, head.checkpoint_path());
    RunResult rest = tail.run();
    REQUIRE(rest.curve.size() == 1);

    CHECK(rest.curve[0].examples_consumed == full.curve[1].examples_consumed);
    CHECK(rest.curve[0].train_loss == full.curve[1].train_loss);
    CHECK(rest.curve[0].test_loss == full.curve[1].test_loss);
    CHECK(rest.curve[0].metric == full.curve[1].metric);
    std::filesystem::remove(Trainer(cfg).checkpoint_path());
    std::filesystem::remove(head.checkpoint_path());
}

TEST_CASE("examples-consumed accounting is exact") {
    RunConfig cfg = smoke_config("accounting");
    cfg.training_budget = 200; // partial trailing batch dropped
    Trainer trainer(cfg);
    RunResult result = trainer.run();
    CHECK(trainer.examples_consumed() == 192);
    CHECK(result.curve.back().examples_consumed == 192);
    std::filesystem::remove(trainer.checkpoint_path());
}

} // TEST_SUITE
