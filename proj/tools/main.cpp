#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "repbench/harness.hpp"

namespace rb = repbench;

namespace {

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
    return file;
}

void apply_overrides(rb::KeyValues& kv, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
        kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
}

void print_result(const rb::RunConfig& cfg, const rb::RunResult& result) {
    for (const auto& t : result.thresholds)
        std::cout << "threshold " << t.level << ' '
                  << (t.examples_consumed ? std::to_string(*t.examples_consumed) : "none") << '\n';
    std::cout << "overfit "
              << (result.overfit_index ? std::to_string(*result.overfit_index) : "none") << '\n';
    std::cout << "final_metric " << result.final_metric << '\n';
    std::cout << "checkpoint " << result.checkpoint_path << '\n';
    std::cout << "record " << cfg.out_dir << '/' << cfg.run_id << ".run\n";
}

rb::RunResult run_one(const rb::RunConfig& cfg, bool stream_points) {
    std::filesystem::create_directories(cfg.out_dir);
    rb::Trainer trainer(cfg);
    auto result = trainer.run(std::nullopt, [&](const rb::CurvePoint& p) {
        if (stream_points)
            std::cout << "point " << p.examples_consumed << ' ' << p.train_loss << ' ' << p.test_loss
                      << ' ' << p.metric << ' ' << p.wall_seconds << std::endl;
    });
    rb::write_record(cfg.out_dir + "/" + cfg.run_id + ".run", rb::make_record(cfg, result));
    return result;
}

int cmd_generate(const std::string& what, const std::string& out, const std::string& task_name,
                 uint64_t count, uint64_t seed, const std::string& curation, int matrix_dim,
                 int per_class) {
    std::ofstream file;
    std::ostream& os = open_output(file, out);
    if (what == "vocab") {
        os << rb::vocab::manifest();
    } else if (what == "dataset") {
        auto task = rb::task_from_name(task_name);
        if (!task) throw std::invalid_argument("unknown task '" + task_name + "'");
        rb::DatasetSpec spec;
        spec.task = *task;
        spec.seed = seed;
        spec.bulk = rb::parse_curation(curation);
        spec.matrix_dim = matrix_dim;
        rb::Dataset ds(spec);
        for (uint64_t i = 0; i < count; ++i)
            os << rb::export_record(*task, ds.example(i), seed, i) << '\n';
    } else if (what == "gcd-testset") {
        auto set = rb::gcd_class_testset(seed, per_class);
        for (size_t i = 0; i < set.size(); ++i)
            os << rb::export_record(rb::TaskKind::Gcd, rb::TaskExample(set[i]), seed, i) << '\n';
    } else {
        throw std::invalid_argument("generate: expected vocab | dataset | gcd-testset");
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& task_name, int per_class, int samples,
             uint64_t seed, double tau, int matrix_dim, const std::string& dump_path) {
    auto task = rb::task_from_name(task_name);
    if (!task) throw std::invalid_argument("unknown task '" + task_name + "'");
    auto loaded = rb::load_checkpoint(checkpoint);
    rb::Transformer<float> model(loaded.model.config);
    rb::ModelPredictor predictor(model, loaded.model, rb::task_max_tgt_len(*task, matrix_dim));

    std::ofstream dump_file;
    std::ostream* dump = nullptr;
    if (!dump_path.empty()) {
        dump_file.open(dump_path, std::ios::trunc);
        if (!dump_file) throw std::runtime_error("cannot open '" + dump_path + "'");
        dump = &dump_file;
    }

    if (*task == rb::TaskKind::Gcd) {
        auto report = rb::eval_gcd(predictor, rb::gcd_class_testset(seed, per_class), tau, dump);
        std::cout << "correct_count " << report.correct_count << "\nmetric " << report.metric()
                  << "\ntau " << report.tau << '\n';
    } else if (*task == rb::TaskKind::ModMul) {
        auto report = rb::eval_modmul(predictor, seed, samples, dump);
        std::cout << "accuracy " << report.accuracy << "\nsamples " << report.sample_count << '\n';
    } else {
        auto report = rb::eval_eigen(predictor, seed, samples, matrix_dim, dump);
        std::cout << "accuracy " << report.accuracy << "\nsamples " << report.sample_count << '\n';
    }
    return 0;
}

int cmd_grid(const rb::ExperimentConfig& exp) {
    auto configs = rb::expand_grid(exp);
    std::cout << "grid '" << exp.name << "': " << configs.size() << " runs -> " << exp.out_dir
              << std::endl;
    std::filesystem::create_directories(exp.out_dir);

    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= configs.size()) return;
            try {
                auto result = run_one(configs[i], false);
                std::cout << "done " << configs[i].run_id << " final_metric " << result.final_metric
                          << std::endl;
            } catch (const std::exception& e) {
                ++failures;
                std::cerr << "failed " << configs[i].run_id << ": " << e.what() << std::endl;
            }
        }
    };
    int n_workers = std::max(1, std::min<int>(exp.parallelism, static_cast<int>(configs.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return failures.load() == 0 ? 0 : 1;
}

int cmd_plot_data(const std::string& records_dir, const std::string& out_dir,
                  const std::string& group_csv) {
    auto records = rb::read_records_dir(records_dir);
    if (records.empty()) {
        std::cerr << "warning: no .run records under '" << records_dir << "'\n";
        return 1;
    }
    std::vector<std::string> group_keys;
    std::istringstream is(group_csv);
    std::string key;
    while (std::getline(is, key, ','))
        if (!key.empty()) group_keys.push_back(key);

    std::filesystem::create_directories(out_dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream os(out_dir + "/" + name, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open '" + out_dir + "/" + name + "'");
        os << content;
    };
    write("curves.tsv", rb::curves_table(records, group_keys));
    write("crossings.tsv", rb::crossings_table(records, group_keys));
    bool any_two_set = false;
    for (const auto& r : records)
        if (r.get("law") == "two-set" || r.get("law") == "shifting") any_two_set = true;
    if (any_two_set) write("heatgrid.tsv", rb::heatgrid_table(records));
    std::cout << "wrote " << out_dir << "/curves.tsv, crossings.tsv"
              << (any_two_set ? ", heatgrid.tsv" : "") << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"repetition-controlled training workbench"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "export vocab manifests, datasets, and test sets");
    std::string gen_what, gen_out, gen_task = "gcd", gen_curation = "uniform";
    uint64_t gen_count = 1000, gen_seed = 1;
    int gen_matrix_dim = 5, gen_per_class = 1000;
    gen->add_option("what", gen_what, "vocab | dataset | gcd-testset")->required();
    gen->add_option("-o,--out", gen_out, "output file (default stdout)");
    gen->add_option("--task", gen_task, "gcd | modmul | eigen");
    gen->add_option("--count", gen_count, "records to export");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--curation", gen_curation, "curation spec");
    gen->add_option("--matrix-dim", gen_matrix_dim, "eigen matrix dimension");
    gen->add_option("--per-class", gen_per_class, "gcd-testset pairs per class");

    // train
    auto* train = app.add_subcommand("train", "train one run from a config file");
    std::string train_config;
    std::vector<std::string> train_sets;
    train->add_option("-c,--config", train_config, "run config file")->required();
    train->add_option("--set", train_sets, "override key=value");

    // grid
    auto* grid = app.add_subcommand("grid", "expand an experiment grid and run it");
    std::string grid_config;
    std::vector<std::string> grid_sets;
    grid->add_option("-c,--config", grid_config, "experiment config file")->required();
    grid->add_option("--set", grid_sets, "override key=value");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a task metric");
    std::string eval_ckpt, eval_task = "gcd", eval_dump;
    int eval_per_class = 1000, eval_samples = 10000, eval_matrix_dim = 5;
    uint64_t eval_seed = 12061;
    double eval_tau = 0.95;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--task", eval_task, "gcd | modmul | eigen")->required();
    eval->add_option("--per-class", eval_per_class, "gcd test pairs per class");
    eval->add_option("--samples", eval_samples, "modmul/eigen test samples");
    eval->add_option("--seed", eval_seed, "test set seed");
    eval->add_option("--tau", eval_tau, "gcd class threshold");
    eval->add_option("--matrix-dim", eval_matrix_dim, "eigen matrix dimension");
    eval->add_option("--dump", eval_dump, "per-example prediction dump file");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
    int gc_enc = 2, gc_dec = 2, gc_dim = 16, gc_heads = 2, gc_ffn = 32, gc_samples = 200,
        gc_batch = 4;
    double gc_step = 1e-3;
    uint64_t gc_seed = 1;
    gc->add_option("--enc", gc_enc, "encoder layers");
    gc->add_option("--dec", gc_dec, "decoder layers");
    gc->add_option("--dim", gc_dim, "embedding width");
    gc->add_option("--heads", gc_heads, "attention heads");
    gc->add_option("--ffn", gc_ffn, "feed-forward width");
    gc->add_option("--samples", gc_samples, "sampled scalar parameters");
    gc->add_option("--batch", gc_batch, "examples in the probe batch");
    gc->add_option("--step", gc_step, "central-difference step");
    gc->add_option("--seed", gc_seed, "model/batch seed");

    // sample-audit
    auto* audit = app.add_subcommand("sample-audit", "empirical frequency report for a sampler law");
    std::string audit_law = "two-set";
    uint64_t audit_n = 1000000, audit_S = 500, audit_T = 1000000, audit_seed = 1, audit_s_eff = 0;
    double audit_p = 0.25, audit_k = 10.0, audit_beta = 0.0;
    bool audit_unlimited = false;
    audit->add_option("--law", audit_law, "single | two-set | shifting | exponential");
    audit->add_option("--n", audit_n, "data budget N");
    audit->add_flag("--unlimited", audit_unlimited, "unlimited data budget");
    audit->add_option("--s", audit_S, "repeated-set size S");
    audit->add_option("--p", audit_p, "repeated-set probability p");
    audit->add_option("--k", audit_k, "shifting repetitions per window");
    audit->add_option("--beta", audit_beta, "exponential rate");
    audit->add_option("--s-eff", audit_s_eff, "exponential S_eff (converted to beta)");
    audit->add_option("--draws", audit_T, "draws to audit");
    audit->add_option("--seed", audit_seed, "stream seed");

    // plot-data
    auto* plot = app.add_subcommand("plot-data", "aggregate run records into curve tables");
    std::string plot_records, plot_out = "plots", plot_group = "law,data_budget,S,p";
    plot->add_option("--records", plot_records, "directory of .run records")->required();
    plot->add_option("--out", plot_out, "output directory");
    plot->add_option("--group", plot_group, "comma-separated config keys to group by");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen)
            return cmd_generate(gen_what, gen_out, gen_task, gen_count, gen_seed, gen_curation,
                                gen_matrix_dim, gen_per_class);
        if (*train) {
            auto kv = rb::parse_config_file(train_config);
            apply_overrides(kv, train_sets);
            auto cfg = rb::run_config_from(kv);
            auto result = run_one(cfg, true);
            print_result(cfg, result);
            return 0;
        }
        if (*grid) {
            auto kv = rb::parse_config_file(grid_config);
            apply_overrides(kv, grid_sets);
            return cmd_grid(rb::experiment_from(kv));
        }
        if (*eval)
            return cmd_eval(eval_ckpt, eval_task, eval_per_class, eval_samples, eval_seed, eval_tau,
                            eval_matrix_dim, eval_dump);
        if (*gc) {
            rb::ModelConfig cfg;
            cfg.enc_layers = gc_enc;
            cfg.dec_layers = gc_dec;
            cfg.dim = gc_dim;
            cfg.heads = gc_heads;
            cfg.ffn_dim = gc_ffn;
            cfg.max_src_len = 8;
            cfg.max_tgt_len = 4;
            std::vector<rb::TokenSeq> srcs, tgts;
            rb::CurationSpec uniform;
            for (int i = 0; i < gc_batch; ++i) {
                rb::Rng rng(rb::derive_seed(gc_seed, 0x47424348, static_cast<uint64_t>(i)));
                auto [s, t] = rb::build_sequences(
                    rb::TaskKind::Gcd, rb::TaskExample(rb::make_gcd_example(rng, uniform)));
                srcs.push_back(std::move(s));
                tgts.push_back(std::move(t));
            }
            auto batch = rb::make_token_batch(srcs, tgts);
            auto report = rb::grad_check(cfg, batch, gc_samples, gc_step, gc_seed);
            std::cout << report.summary();
            return report.max_rel_error <= 1e-3 ? 0 : 1;
        }
        if (*audit) {
            rb::SamplerSpec spec;
            auto law = rb::law_from_name(audit_law);
            if (!law) throw std::invalid_argument("unknown law '" + audit_law + "'");
            spec.law = *law;
            if (!audit_unlimited) spec.N = audit_n;
            spec.S = audit_S;
            spec.p = audit_p;
            spec.k = audit_k;
            spec.beta = audit_beta;
            if (audit_s_eff > 0) spec.beta = rb::s_eff_to_beta(audit_s_eff, audit_n);
            auto report = rb::audit_frequencies(spec, audit_T, audit_seed);
            std::cout << report.table();
            return 0;
        }
        if (*plot) return cmd_plot_data(plot_records, plot_out, plot_group);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
