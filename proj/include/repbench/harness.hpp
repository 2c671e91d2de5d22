#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "repbench/trainloop.hpp"

namespace repbench {

// Flat key = value configuration; '#' starts a comment. Keys keep insertion
// order so serialized configs stay stable.
struct KeyValues {
    std::vector<std::pair<std::string, std::string>> items;

    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;
    bool has(const std::string& key) const { return get(key).has_value(); }
};

KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);

// Default output root: $REPBENCH_OUT when set, else "runs".
std::string default_out_root();

// Builds a validated RunConfig from flat keys, filling task defaults
// (sequence lengths, decode caps). Unknown keys are rejected.
RunConfig run_config_from(const KeyValues& kv);

// Canonical resolved key=value form embedded into results records.
KeyValues resolved_config(const RunConfig& cfg);

struct ExperimentConfig {
    std::string name;
    KeyValues base;                                             // run config keys
    std::vector<std::pair<std::string, std::vector<std::string>>> axes; // axis.<key> = v1 v2 ...
    std::string out_dir;
    int parallelism = 1;
};

ExperimentConfig experiment_from(const KeyValues& kv);

// Cross product of the axes; run ids derive from (name, axis values, seed).
std::vector<RunConfig> expand_grid(const ExperimentConfig& exp);

struct ResultsRecord {
    KeyValues config; // fully resolved
    std::vector<CurvePoint> curve;
    std::vector<ThresholdCrossing> thresholds;
    std::optional<int> overfit_index;
    double final_metric = 0.0;

    std::string get(const std::string& key) const; // throws on missing key
};

ResultsRecord make_record(const RunConfig& cfg, const RunResult& result);
void write_record(const std::string& path, const ResultsRecord& record);
ResultsRecord read_record(const std::string& path);
std::vector<ResultsRecord> read_records_dir(const std::string& dir);

// --- Aggregation (mixed-task input is rejected) ------------------------------

struct GroupStats {
    std::string group;
    int runs = 0;
    double mean_final = 0.0;
    int crossed_50 = 0, crossed_99 = 0;
};

std::vector<GroupStats> aggregate(const std::vector<ResultsRecord>& records,
                                  const std::vector<std::string>& group_keys);

// Plot-data tables (tab-separated, header row, byte-stable ordering).
std::string curves_table(const std::vector<ResultsRecord>& records,
                         const std::vector<std::string>& group_keys); // metric vs TB per group
std::string heatgrid_table(const std::vector<ResultsRecord>& records); // final metric vs (S, p)
std::string crossings_table(const std::vector<ResultsRecord>& records,
                            const std::vector<std::string>& group_keys);

} // namespace repbench
