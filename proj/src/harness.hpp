#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "theorem.hpp"
#include "trace.hpp"

namespace dht {

struct AggRow {
    int iter = 0;
    int n = 0;
    double mean_w_dist_sq = 0.0, std_w_dist_sq = 0.0;
    double mean_train_loss = 0.0, std_train_loss = 0.0;
    double mean_test_acc = 0.0, std_test_acc = 0.0;
};

// Per-iteration mean and sample std across seeds, keyed by teacher.
using AggregateStats = std::map<std::string, std::vector<AggRow>>;

struct AssertionResult {
    std::string description;
    bool passed = false;
    double mean_a = 0.0, mean_b = 0.0;
};

struct RunResult {
    std::vector<std::string> trace_files;
    std::vector<AssertionResult> assertions;
    bool ok() const {
        for (const auto& a : assertions)
            if (!a.passed)
                return false;
        return true;
    }
};

// Executes every (teacher, seed) pair declared by the config, writing one
// trace CSV each; byte-identical outputs for identical configs. out_dir
// overrides run.out_dir when non-empty; both are resolved against
// $DHT_OUT_ROOT when that is set.
RunResult run_experiment(const RunConfig& config, const std::string& out_dir = "", int jobs = 0);

AggregateStats aggregate_traces(const std::vector<TeachingTrace>& traces);
AggregateStats aggregate_dir(const std::string& dir);
void save_aggregate_csv(const AggregateStats& stats, const std::string& path);
AggregateStats load_aggregate_csv(const std::string& path);

// One polyline per teacher (mean), translucent band at mean +- std, legend,
// optional log10 y scale.
void plot_svg(const AggregateStats& stats, const std::string& metric, bool log_scale,
              const std::string& path);

enum class CompareVerdict { ABetter, BBetter, Tie };

struct CompareResult {
    CompareVerdict verdict = CompareVerdict::Tie;
    double mean_a = 0.0, mean_b = 0.0;
};

// "Better" means lower for w_dist_sq / train_loss and higher for test_acc;
// a win requires clearing the relative margin.
CompareResult compare_stats(const AggregateStats& stats, const std::string& teacher_a,
                            const std::string& teacher_b, int iter, const std::string& metric,
                            double margin);

// verify-theorem subcommand: constructs the interpolation instance per the
// theorem.* keys, runs the verification, writes a per-step CSV and returns
// the human-readable summary.
std::string verify_theorem_cmd(const RunConfig& config, const std::string& out_csv);

std::string resolve_out_dir(const std::string& dir);

}  // namespace dht
