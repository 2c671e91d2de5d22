#include "repbench/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace repbench {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument(key + ": expected an unsigned integer, got '" + value + "'");
    }
}

int to_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
    }
}

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string fmt6(double v) { return fmt(v, "%.6g"); }

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '-');
    return out;
}

} // namespace

void KeyValues::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items)
        if (k == key) {
            v = value;
            return;
        }
    items.emplace_back(key, value);
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
    for (const auto& [k, v] : items)
        if (k == key) return v;
    return std::nullopt;
}

KeyValues parse_config_text(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        kv.set(key, value);
    }
    return kv;
}

KeyValues parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return parse_config_text(os.str());
}

std::string default_out_root() {
    const char* env = std::getenv("REPBENCH_OUT");
    return env && *env ? env : "runs";
}

namespace {

const std::set<std::string> kRunKeys = {
    "task",        "seed",         "run_id",          "out_dir",        "data_budget",
    "curation",    "repeated_curation", "law",        "S",              "p",
    "k",           "beta",         "s_eff",           "batch_mode",     "batch_size",
    "enc_layers",  "dec_layers",   "dim",             "heads",          "ffn_dim",
    "dropout",     "matrix_dim",   "optimizer",       "learning_rate",  "adam_beta1",
    "adam_beta2",  "adam_epsilon", "weight_decay",    "training_budget", "eval_cadence",
    "gcd_per_class", "eval_samples", "test_loss_samples", "tau",        "checkpoint_every",
    "max_src_len", "max_tgt_len"};

} // namespace

RunConfig run_config_from(const KeyValues& kv) {
    for (const auto& [k, v] : kv.items)
        if (!kRunKeys.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");

    RunConfig cfg;
    auto task_str = kv.get("task");
    if (!task_str) throw std::invalid_argument("task: required (gcd | modmul | eigen)");
    auto task = task_from_name(*task_str);
    if (!task) throw std::invalid_argument("task: unknown task '" + *task_str + "'");
    cfg.task = *task;
    cfg.dataset.task = *task;

    if (auto v = kv.get("seed")) cfg.seed = to_u64("seed", *v);

    auto db = kv.get("data_budget");
    if (!db) throw std::invalid_argument("data_budget: required (integer or 'unlimited')");
    if (*db == "unlimited") {
        cfg.dataset.data_budget = std::nullopt;
    } else {
        cfg.dataset.data_budget = to_u64("data_budget", *db);
    }
    cfg.sampler.N = cfg.dataset.data_budget;

    if (auto v = kv.get("curation")) cfg.dataset.bulk = parse_curation(*v);
    if (auto v = kv.get("repeated_curation")) cfg.dataset.repeated = parse_curation(*v);
    if (auto v = kv.get("matrix_dim")) cfg.dataset.matrix_dim = to_int("matrix_dim", *v);

    if (auto v = kv.get("law")) {
        auto law = law_from_name(*v);
        if (!law) throw std::invalid_argument("law: unknown sampler law '" + *v + "'");
        cfg.sampler.law = *law;
    }
    if (auto v = kv.get("S")) cfg.sampler.S = to_u64("S", *v);
    if (auto v = kv.get("p")) cfg.sampler.p = to_double("p", *v);
    if (auto v = kv.get("k")) cfg.sampler.k = to_double("k", *v);
    if (auto v = kv.get("beta")) cfg.sampler.beta = to_double("beta", *v);
    if (auto v = kv.get("s_eff")) {
        if (kv.has("beta")) throw std::invalid_argument("s_eff: give either s_eff or beta, not both");
        if (!cfg.sampler.N) throw std::invalid_argument("s_eff: requires a finite data_budget");
        cfg.sampler.beta = s_eff_to_beta(to_u64("s_eff", *v), *cfg.sampler.N);
    }
    if (cfg.dataset.repeated) cfg.dataset.repeated_size = cfg.sampler.S;

    if (auto v = kv.get("batch_mode")) {
        auto mode = batch_mode_from_name(*v);
        if (!mode) throw std::invalid_argument("batch_mode: expected mixed or mono");
        cfg.batch.mode = *mode;
    }
    if (auto v = kv.get("batch_size")) cfg.batch.size = to_int("batch_size", *v);

    cfg.model.enc_layers = kv.has("enc_layers") ? to_int("enc_layers", *kv.get("enc_layers")) : 2;
    cfg.model.dec_layers = kv.has("dec_layers") ? to_int("dec_layers", *kv.get("dec_layers")) : 2;
    cfg.model.dim = kv.has("dim") ? to_int("dim", *kv.get("dim")) : 64;
    cfg.model.heads = kv.has("heads") ? to_int("heads", *kv.get("heads")) : 4;
    cfg.model.ffn_dim = kv.has("ffn_dim") ? to_int("ffn_dim", *kv.get("ffn_dim")) : 4 * cfg.model.dim;
    cfg.model.dropout_rate = kv.has("dropout") ? to_double("dropout", *kv.get("dropout")) : 0.0;
    cfg.model.vocab_size = vocab::kSize;
    cfg.model.max_src_len = kv.has("max_src_len")
                                ? to_int("max_src_len", *kv.get("max_src_len"))
                                : task_max_src_len(cfg.task, cfg.dataset.matrix_dim);
    cfg.model.max_tgt_len = kv.has("max_tgt_len")
                                ? to_int("max_tgt_len", *kv.get("max_tgt_len"))
                                : task_max_tgt_len(cfg.task, cfg.dataset.matrix_dim);

    if (auto v = kv.get("optimizer")) {
        auto kind = optim_from_name(*v);
        if (!kind) throw std::invalid_argument("optimizer: expected adam or adamw");
        cfg.optim.kind = *kind;
    }
    if (auto v = kv.get("learning_rate")) cfg.optim.learning_rate = to_double("learning_rate", *v);
    if (auto v = kv.get("adam_beta1")) cfg.optim.beta1 = to_double("adam_beta1", *v);
    if (auto v = kv.get("adam_beta2")) cfg.optim.beta2 = to_double("adam_beta2", *v);
    if (auto v = kv.get("adam_epsilon")) cfg.optim.epsilon = to_double("adam_epsilon", *v);
    if (auto v = kv.get("weight_decay")) cfg.optim.weight_decay = to_double("weight_decay", *v);

    auto tb = kv.get("training_budget");
    if (!tb) throw std::invalid_argument("training_budget: required");
    cfg.training_budget = to_u64("training_budget", *tb);
    if (auto v = kv.get("eval_cadence")) cfg.eval_cadence = to_u64("eval_cadence", *v);
    if (auto v = kv.get("gcd_per_class")) cfg.gcd_per_class = to_int("gcd_per_class", *v);
    if (auto v = kv.get("eval_samples")) cfg.eval_samples = to_int("eval_samples", *v);
    if (auto v = kv.get("test_loss_samples")) cfg.test_loss_samples = to_int("test_loss_samples", *v);
    if (auto v = kv.get("tau")) cfg.tau = to_double("tau", *v);
    if (auto v = kv.get("checkpoint_every")) cfg.checkpoint_every = to_u64("checkpoint_every", *v);

    cfg.out_dir = kv.get("out_dir").value_or(default_out_root());
    cfg.run_id = kv.get("run_id").value_or("run-" + std::string(task_name(cfg.task)) + "-seed" +
                                           std::to_string(cfg.seed));
    cfg.validate();
    return cfg;
}

KeyValues resolved_config(const RunConfig& cfg) {
    KeyValues kv;
    kv.set("task", task_name(cfg.task));
    kv.set("seed", std::to_string(cfg.seed));
    kv.set("run_id", cfg.run_id);
    kv.set("data_budget",
           cfg.dataset.data_budget ? std::to_string(*cfg.dataset.data_budget) : "unlimited");
    kv.set("curation", cfg.dataset.bulk.describe());
    if (cfg.dataset.repeated) kv.set("repeated_curation", cfg.dataset.repeated->describe());
    kv.set("law", law_name(cfg.sampler.law));
    kv.set("S", std::to_string(cfg.sampler.S));
    kv.set("p", fmt6(cfg.sampler.p));
    kv.set("k", fmt6(cfg.sampler.k));
    kv.set("beta", fmt6(cfg.sampler.beta));
    kv.set("batch_mode", batch_mode_name(cfg.batch.mode));
    kv.set("batch_size", std::to_string(cfg.batch.size));
    kv.set("enc_layers", std::to_string(cfg.model.enc_layers));
    kv.set("dec_layers", std::to_string(cfg.model.dec_layers));
    kv.set("dim", std::to_string(cfg.model.dim));
    kv.set("heads", std::to_string(cfg.model.heads));
    kv.set("ffn_dim", std::to_string(cfg.model.ffn_dim));
    kv.set("dropout", fmt6(cfg.model.dropout_rate));
    kv.set("max_src_len", std::to_string(cfg.model.max_src_len));
    kv.set("max_tgt_len", std::to_string(cfg.model.max_tgt_len));
    kv.set("matrix_dim", std::to_string(cfg.dataset.matrix_dim));
    kv.set("optimizer", optim_name(cfg.optim.kind));
    kv.set("learning_rate", fmt6(cfg.optim.learning_rate));
    kv.set("adam_beta1", fmt6(cfg.optim.beta1));
    kv.set("adam_beta2", fmt6(cfg.optim.beta2));
    kv.set("adam_epsilon", fmt6(cfg.optim.epsilon));
    kv.set("weight_decay", fmt6(cfg.optim.weight_decay));
    kv.set("training_budget", std::to_string(cfg.training_budget));
    kv.set("eval_cadence", std::to_string(cfg.eval_cadence));
    kv.set("gcd_per_class", std::to_string(cfg.gcd_per_class));
    kv.set("eval_samples", std::to_string(cfg.eval_samples));
    kv.set("test_loss_samples", std::to_string(cfg.test_loss_samples));
    kv.set("tau", fmt6(cfg.tau));
    kv.set("checkpoint_every", std::to_string(cfg.checkpoint_every));
    return kv;
}

ExperimentConfig experiment_from(const KeyValues& kv) {
    ExperimentConfig exp;
    for (const auto& [k, v] : kv.items) {
        if (k == "name") {
            exp.name = v;
        } else if (k == "parallelism") {
            exp.parallelism = to_int("parallelism", v);
        } else if (k == "out_dir") {
            exp.out_dir = v;
            exp.base.set(k, v);
        } else if (k.rfind("axis.", 0) == 0) {
            std::string key = k.substr(5);
            std::vector<std::string> values;
            std::istringstream is(v);
            std::string item;
            while (is >> item) values.push_back(item);
            if (values.empty()) throw std::invalid_argument(k + ": empty axis");
            exp.axes.emplace_back(key, values);
        } else {
            exp.base.set(k, v);
        }
    }
    if (exp.name.empty()) throw std::invalid_argument("name: required for an experiment");
    if (exp.out_dir.empty()) {
        exp.out_dir = default_out_root() + "/" + sanitize(exp.name);
        exp.base.set("out_dir", exp.out_dir);
    }
    if (exp.parallelism < 1) throw std::invalid_argument("parallelism: must be >= 1");
    return exp;
}

std::vector<RunConfig> expand_grid(const ExperimentConfig& exp) {
    std::vector<KeyValues> combos{exp.base};
    std::vector<std::string> tags{exp.name};
    for (const auto& [key, values] : exp.axes) {
        std::vector<KeyValues> next;
        std::vector<std::string> next_tags;
        for (size_t i = 0; i < combos.size(); ++i) {
            for (const auto& v : values) {
                KeyValues kv = combos[i];
                kv.set(key, v);
                next.push_back(std::move(kv));
                next_tags.push_back(tags[i] + "__" + sanitize(key) + "-" + sanitize(v));
            }
        }
        combos = std::move(next);
        tags = std::move(next_tags);
    }
    std::vector<RunConfig> out;
    out.reserve(combos.size());
    for (size_t i = 0; i < combos.size(); ++i) {
        combos[i].set("run_id", tags[i]);
        out.push_back(run_config_from(combos[i]));
    }
    return out;
}

std::string ResultsRecord::get(const std::string& key) const {
    auto v = config.get(key);
    if (!v) throw std::invalid_argument("record: missing config key '" + key + "'");
    return *v;
}

ResultsRecord make_record(const RunConfig& cfg, const RunResult& result) {
    ResultsRecord rec;
    rec.config = resolved_config(cfg);
    rec.curve = result.curve;
    rec.thresholds = result.thresholds;
    rec.overfit_index = result.overfit_index;
    rec.final_metric = result.final_metric;
    return rec;
}

void write_record(const std::string& path, const ResultsRecord& rec) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("record: cannot open '" + path + "' for writing");
    os << "record 1\n";
    for (const auto& [k, v] : rec.config.items) os << "config " << k << " = " << v << '\n';
    for (const auto& p : rec.curve)
        os << "point " << p.examples_consumed << ' ' << fmt(p.train_loss) << ' ' << fmt(p.test_loss)
           << ' ' << fmt(p.metric) << ' ' << fmt(p.wall_seconds) << '\n';
    for (const auto& t : rec.thresholds) {
        os << "threshold " << fmt(t.level) << ' ';
        if (t.examples_consumed)
            os << *t.examples_consumed << '\n';
        else
            os << "none\n";
    }
    os << "overfit " << (rec.overfit_index ? std::to_string(*rec.overfit_index) : "none") << '\n';
    os << "final_metric " << fmt(rec.final_metric) << '\n';
    os << "end\n";
    if (!os) throw std::runtime_error("record: write to '" + path + "' failed");
}

ResultsRecord read_record(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("record: cannot open '" + path + "'");
    ResultsRecord rec;
    std::string line;
    bool ended = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag.empty() || tag == "record") continue;
        if (tag == "config") {
            std::string rest = line.substr(7);
            auto eq = rest.find('=');
            if (eq == std::string::npos) throw std::runtime_error("record: malformed config line");
            rec.config.set(trim(rest.substr(0, eq)), trim(rest.substr(eq + 1)));
        } else if (tag == "point") {
            CurvePoint p;
            ls >> p.examples_consumed >> p.train_loss >> p.test_loss >> p.metric >> p.wall_seconds;
            if (!ls) throw std::runtime_error("record: malformed point line");
            rec.curve.push_back(p);
        } else if (tag == "threshold") {
            ThresholdCrossing t;
            std::string at;
            ls >> t.level >> at;
            if (!ls) throw std::runtime_error("record: malformed threshold line");
            if (at != "none") t.examples_consumed = std::stoull(at);
            rec.thresholds.push_back(t);
        } else if (tag == "overfit") {
            std::string at;
            ls >> at;
            if (at != "none") rec.overfit_index = std::stoi(at);
        } else if (tag == "final_metric") {
            ls >> rec.final_metric;
        } else if (tag == "end") {
            ended = true;
        } else {
            throw std::runtime_error("record: unknown line tag '" + tag + "'");
        }
    }
    if (!ended) throw std::runtime_error("record: truncated file '" + path + "'");
    return rec;
}

std::vector<ResultsRecord> read_records_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".run")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<ResultsRecord> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(read_record(p));
    return out;
}

namespace {

void check_single_task(const std::vector<ResultsRecord>& records) {
    if (records.empty()) return;
    std::string task = records[0].get("task");
    for (const auto& r : records)
        if (r.get("task") != task)
            throw std::invalid_argument("aggregate: records mix tasks ('" + task + "' vs '" +
                                        r.get("task") + "')");
}

std::string group_label(const ResultsRecord& r, const std::vector<std::string>& keys) {
    std::string label;
    for (const auto& k : keys) {
        if (!label.empty()) label += ",";
        label += k + "=" + r.get(k);
    }
    return label.empty() ? "all" : label;
}

bool crossed(const ResultsRecord& r, double level) {
    for (const auto& t : r.thresholds)
        if (t.level == level && t.examples_consumed) return true;
    return false;
}

} // namespace

std::vector<GroupStats> aggregate(const std::vector<ResultsRecord>& records,
                                  const std::vector<std::string>& group_keys) {
    check_single_task(records);
    std::map<std::string, std::vector<const ResultsRecord*>> groups;
    for (const auto& r : records) groups[group_label(r, group_keys)].push_back(&r);

    std::vector<GroupStats> out;
    for (const auto& [label, members] : groups) {
        GroupStats g;
        g.group = label;
        g.runs = static_cast<int>(members.size());
        for (const auto* r : members) {
            g.mean_final += r->final_metric;
            if (crossed(*r, 0.50)) ++g.crossed_50;
            if (crossed(*r, 0.99)) ++g.crossed_99;
        }
        g.mean_final /= g.runs;
        out.push_back(std::move(g));
    }
    return out;
}

std::string curves_table(const std::vector<ResultsRecord>& records,
                         const std::vector<std::string>& group_keys) {
    check_single_task(records);
    std::map<std::string, std::map<uint64_t, std::vector<double>>> table;
    for (const auto& r : records) {
        auto& per_tb = table[group_label(r, group_keys)];
        for (const auto& p : r.curve) per_tb[p.examples_consumed].push_back(p.metric);
    }
    std::ostringstream os;
    os << "group\ttb\tmean_metric\tmin_metric\tmax_metric\truns\n";
    for (const auto& [label, per_tb] : table) {
        for (const auto& [tb, vals] : per_tb) {
            double sum = 0.0, lo = vals[0], hi = vals[0];
            for (double v : vals) {
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            os << label << '\t' << tb << '\t' << fmt6(sum / static_cast<double>(vals.size())) << '\t'
               << fmt6(lo) << '\t' << fmt6(hi) << '\t' << vals.size() << '\n';
        }
    }
    return os.str();
}

std::string heatgrid_table(const std::vector<ResultsRecord>& records) {
    check_single_task(records);
    std::map<std::pair<double, double>, std::vector<double>> cells; // (S, p) -> finals
    for (const auto& r : records) {
        double S = std::stod(r.get("S"));
        double p = std::stod(r.get("p"));
        cells[{S, p}].push_back(r.final_metric);
    }
    std::ostringstream os;
    os << "S\tp\tmean_final\truns\n";
    for (const auto& [key, vals] : cells) {
        double sum = 0.0;
        for (double v : vals) sum += v;
        os << fmt6(key.first) << '\t' << fmt6(key.second) << '\t'
           << fmt6(sum / static_cast<double>(vals.size())) << '\t' << vals.size() << '\n';
    }
    return os.str();
}

std::string crossings_table(const std::vector<ResultsRecord>& records,
                            const std::vector<std::string>& group_keys) {
    auto stats = aggregate(records, group_keys);
    std::ostringstream os;
    os << "group\truns\tmean_final\tcrossed_0.50\tcrossed_0.99\n";
    for (const auto& g : stats)
        os << g.group << '\t' << g.runs << '\t' << fmt6(g.mean_final) << '\t' << g.crossed_50 << '\t'
           << g.crossed_99 << '\n';
    return os.str();
}

} // namespace repbench
