#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "masim/a3c.hpp"
#include "masim/env.hpp"

namespace masim {

struct TrialSummary {
  int trial_id = 0;
  std::uint64_t seed = 0;
  double view_range = 0.0;
  int steps = 0;
  std::vector<MatchRecord> pairs;
  std::optional<double> avg_abs_diff;  // absent when nothing matched
  std::optional<double> std_abs_diff;
  // Group metrics are published per gender and combined; absent in
  // pure-baseline runs and for empty selections.
  std::optional<double> cgr_avg_diff_f, cgr_avg_diff_m, cgr_avg_diff;
  std::optional<double> egr_avg_diff_f, egr_avg_diff_m, egr_avg_diff;
};

// Mean and population standard deviation of |female - male| over the pairs.
// Throws MetricError on empty input.
std::pair<double, double> avg_abs_label_diff(const std::vector<MatchRecord>& pairs);

// Mean of (partner_label - own_label) over matched agents of (group, gender);
// positive means the group married up. Throws MetricError on empty selection.
double group_avg_diff(const std::vector<MatchRecord>& pairs, Group group, Gender gender);

// Same, over both genders of the group.
double group_avg_diff_combined(const std::vector<MatchRecord>& pairs, Group group);

struct BaselineRun {
  std::vector<double> view_ranges;
  int trials_per_range = 0;
  std::uint64_t seed = 0;
  std::vector<TrialSummary> trials;   // range-major order
  std::vector<std::optional<double>> range_means;  // mean per view range
};

// trials_per_range all-baseline episodes per view range, seeded per
// (range, trial) so the grid is order-independent.
BaselineRun run_baseline(const WorldConfig& base, const std::vector<double>& view_ranges,
                         int trials_per_range, std::uint64_t seed);

struct EvalRun {
  std::uint64_t seed = 0;
  std::vector<TrialSummary> trials;
  std::optional<double> mean_avg_abs_diff;
  std::optional<double> mean_std_abs_diff;
  std::optional<double> mean_egr_avg_diff;
  std::optional<double> mean_cgr_avg_diff;
};

// Greedy evaluation: experimental agents follow `params` (argmax), control
// agents the baseline rules.
EvalRun run_mixed(const WorldConfig& cfg, const ModelParams& params, int trials,
                  std::uint64_t seed);

struct SecretaryDiagnostic {
  int best_cutoff = 0;                // argmax, ties to the lower cutoff
  std::vector<double> success_prob;   // indexed by cutoff 0..L-1
};

// Exhaustive enumeration of all L! sender orders against respond_to_offer.
// Success = the best sender (label L-1) was accepted. 2 <= L <= 10.
SecretaryDiagnostic secretary_cutoff_diagnostic(int L);

// ---------------------------------------------------------------------------
// Run directories. Every run writes metadata.json (resolved config, seeds,
// format versions), pairs.csv, and summary.json; nothing carries timestamps
// so identical runs produce identical bytes.

void write_baseline_run(const std::string& dir, const BaselineRun& run,
                        const WorldConfig& base);
void write_eval_run(const std::string& dir, const EvalRun& run, const WorldConfig& cfg,
                    const std::string& checkpoint_path, const std::string& mode = "eval");

struct ReplayReport {
  bool ok = true;
  std::vector<std::string> mismatches;
};

// Recomputes every metric from the recorded pairs.csv and compares it against
// summary.json with exact double equality.
ReplayReport replay_run(const std::string& dir);

// ---------------------------------------------------------------------------
// Config file: one JSON document whose keys mirror this struct ("world",
// "hyperparams", "trials", "view_ranges", "trials_per_range", "seed",
// "output_dir", "checkpoint"). Unknown keys are rejected.

struct RunConfig {
  std::string mode;
  WorldConfig world;
  Hyperparams hp;
  int trials = 5;
  std::vector<double> view_ranges = {5.0, 15.0, 25.0};
  int trials_per_range = 5;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string checkpoint;
};

// Throws ConfigError naming every missing or malformed key.
RunConfig load_run_config(const std::string& path, const std::string& mode);

}  // namespace masim
