#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "masim/errors.hpp"
#include "masim/harness.hpp"

using namespace masim;

namespace {

MatchRecord pair(int female, int male, Group fg = Group::Control, Group mg = Group::Control) {
  MatchRecord r;
  r.female_label = female;
  r.male_label = male;
  r.female_group = fg;
  r.male_group = mg;
  r.reward_each = (female + male) / 2.0;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("avg_abs_label_diff: hand examples") {
  const auto [mean, sd] = avg_abs_label_diff({pair(3, 1), pair(2, 2), pair(0, 1)});
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));  // (2 + 0 + 1) / 3
  // Population standard deviation of {2, 0, 1}.
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));

  const auto [m2, s2] = avg_abs_label_diff({pair(4, 4), pair(9, 9)});
  CHECK(m2 == 0.0);
  CHECK(s2 == 0.0);

  const auto [m3, s3] = avg_abs_label_diff({pair(24, 0)});
  CHECK(m3 == 24.0);
  CHECK(s3 == 0.0);

  CHECK_THROWS_AS(avg_abs_label_diff({}), MetricError);
}

TEST_CASE("group_avg_diff: direction, selection, and the combined view") {
  // Experimental males 5 and 7 married up to 19 and 16.
  const std::vector<MatchRecord> pairs{
      pair(19, 5, Group::Control, Group::Experimental),
      pair(16, 7, Group::Control, Group::Experimental),
      pair(3, 20, Group::Control, Group::Control),
  };
  CHECK(group_avg_diff(pairs, Group::Experimental, Gender::Male) ==
        doctest::Approx(11.5).epsilon(1e-12));  // (14 + 9) / 2
  // Control females: partners 5, 7, 20 against own 19, 16, 3.
  CHECK(group_avg_diff(pairs, Group::Control, Gender::Female) ==
        doctest::Approx((5.0 - 19.0 + 7.0 - 16.0 + 20.0 - 3.0) / 3.0).epsilon(1e-12));
  CHECK(group_avg_diff_combined(pairs, Group::Experimental) ==
        doctest::Approx(11.5).epsilon(1e-12));  // no experimental females matched

  // An equal-label pairing contributes zero.
  CHECK(group_avg_diff({pair(8, 8, Group::Experimental, Group::Experimental)},
                       Group::Experimental, Gender::Female) == 0.0);
  // Everyone pairing downward drives the mean negative.
  CHECK(group_avg_diff({pair(20, 2, Group::Experimental, Group::Control),
                        pair(18, 5, Group::Experimental, Group::Control)},
                       Group::Experimental, Gender::Female) < 0.0);

  CHECK_THROWS_AS(group_avg_diff(pairs, Group::Experimental, Gender::Female), MetricError);
  CHECK_THROWS_AS(group_avg_diff({}, Group::Control, Gender::Male), MetricError);
}

TEST_CASE("secretary enumeration: exact small cases") {
  const SecretaryDiagnostic three = secretary_cutoff_diagnostic(3);
  REQUIRE(three.success_prob.size() == 3);
  CHECK(three.best_cutoff == 1);
  CHECK(three.success_prob[1] == doctest::Approx(0.5).epsilon(1e-12));  // 3 of 6 orders
  CHECK(three.success_prob[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const SecretaryDiagnostic two = secretary_cutoff_diagnostic(2);
  REQUIRE(two.success_prob.size() == 2);
  CHECK(two.success_prob[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.success_prob[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.best_cutoff == 0);  // tie resolved toward the smaller cutoff

  CHECK_THROWS_AS(secretary_cutoff_diagnostic(1), ConfigError);
  CHECK_THROWS_AS(secretary_cutoff_diagnostic(11), ConfigError);
}

TEST_CASE("secretary enumeration agrees with an independent oracle and ~L/e law") {
  // Independent brute force: enumerate permutations, apply the first-n rule.
  for (int L = 2; L <= 7; ++L) {
    std::vector<int> order(static_cast<std::size_t>(L));
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<int>> perms;
    do {
      perms.push_back(order);
    } while (std::next_permutation(order.begin(), order.end()));

    const SecretaryDiagnostic diag = secretary_cutoff_diagnostic(L);
    for (int cutoff = 0; cutoff < L; ++cutoff) {
      int wins = 0;
      for (const auto& perm : perms) {
        int best_seen = -1;
        int chosen = -1;
        for (int i = 0; i < L; ++i) {
          if (i < cutoff) {
            best_seen = std::max(best_seen, perm[static_cast<std::size_t>(i)]);
          } else if (perm[static_cast<std::size_t>(i)] >= best_seen) {
            chosen = perm[static_cast<std::size_t>(i)];
            break;
          }
        }
        if (chosen == L - 1) wins += 1;
      }
      const double expect = static_cast<double>(wins) / static_cast<double>(perms.size());
      CHECK(diag.success_prob[static_cast<std::size_t>(cutoff)] ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }

  for (int L = 5; L <= 10; ++L) {
    const SecretaryDiagnostic diag = secretary_cutoff_diagnostic(L);
    CHECK(std::abs(diag.best_cutoff - static_cast<double>(L) / std::numbers::e) <= 1.0);
  }
}

TEST_CASE("run_baseline produces a deterministic range-major grid") {
  WorldConfig base;
  const BaselineRun run = run_baseline(base, {5.0, 25.0}, 2, 7);
  REQUIRE(run.trials.size() == 4);
  REQUIRE(run.range_means.size() == 2);
  CHECK(run.trials[0].view_range == 5.0);
  CHECK(run.trials[1].view_range == 5.0);
  CHECK(run.trials[2].view_range == 25.0);
  CHECK(run.trials[3].view_range == 25.0);
  for (const TrialSummary& t : run.trials) {
    CHECK(t.steps <= base.max_steps);
    CHECK(t.pairs.size() <= 25);
    // Pure-baseline runs never publish group metrics.
    CHECK(!t.egr_avg_diff.has_value());
    CHECK(!t.cgr_avg_diff.has_value());
    if (!t.pairs.empty()) {
      const auto [mean, sd] = avg_abs_label_diff(t.pairs);
      CHECK(t.avg_abs_diff == doctest::Approx(mean).epsilon(1e-12));
      CHECK(t.std_abs_diff == doctest::Approx(sd).epsilon(1e-12));
    }
  }

  const BaselineRun again = run_baseline(base, {5.0, 25.0}, 2, 7);
  for (std::size_t i = 0; i < run.trials.size(); ++i) {
    CHECK(run.trials[i].seed == again.trials[i].seed);
    CHECK(run.trials[i].avg_abs_diff == again.trials[i].avg_abs_diff);
    CHECK(run.trials[i].pairs.size() == again.trials[i].pairs.size());
  }

  // The trial grid is seeded per (range, trial): reordering ranges or adding
  // trials does not disturb existing cells.
  const BaselineRun reordered = run_baseline(base, {25.0, 5.0}, 2, 7);
  CHECK(reordered.trials[0].avg_abs_diff == run.trials[2].avg_abs_diff);
  CHECK(reordered.trials[2].avg_abs_diff == run.trials[0].avg_abs_diff);
}

TEST_CASE("wider view ranges match tighter: the three-range sweep is ordered") {
  WorldConfig base;
  const BaselineRun run = run_baseline(base, {5.0, 15.0, 25.0}, 5, 7);
  REQUIRE(run.range_means.size() == 3);
  REQUIRE(run.range_means[0].has_value());
  REQUIRE(run.range_means[1].has_value());
  REQUIRE(run.range_means[2].has_value());
  CHECK(*run.range_means[0] > *run.range_means[1]);
  CHECK(*run.range_means[1] > *run.range_means[2]);
}

TEST_CASE("run_mixed publishes group metrics and is deterministic") {
  WorldConfig cfg;
  const ModelParams params = ModelParams::init(ModelConfig{}, 11);
  const EvalRun run = run_mixed(cfg, params, 3, 41);
  REQUIRE(run.trials.size() == 3);
  for (const TrialSummary& t : run.trials) {
    if (t.pairs.empty()) continue;
    CHECK(t.avg_abs_diff.has_value());
    // Group metrics appear whenever the group matched at all.
    bool any_experimental = false;
    for (const MatchRecord& r : t.pairs)
      any_experimental |= (r.female_group == Group::Experimental ||
                           r.male_group == Group::Experimental);
    CHECK(t.egr_avg_diff.has_value() == any_experimental);
  }
  REQUIRE(run.mean_avg_abs_diff.has_value());

  const EvalRun again = run_mixed(cfg, params, 3, 41);
  CHECK(run.mean_avg_abs_diff == again.mean_avg_abs_diff);
  CHECK(run.mean_egr_avg_diff == again.mean_egr_avg_diff);

  const EvalRun other = run_mixed(cfg, params, 3, 42);
  CHECK(run.mean_avg_abs_diff != other.mean_avg_abs_diff);
}

TEST_CASE("untrained greedy evaluation reproduces the pure baseline trial for trial") {
  // Action 0 is the baseline policy and fresh params argmax to it, so a
  // mixed evaluation with an untrained model must replicate baseline runs
  // seeded identically, pair for pair.
  WorldConfig cfg;
  const ModelParams params = ModelParams::init(ModelConfig{}, 3);
  const EvalRun eval = run_mixed(cfg, params, 2, 91);
  for (const TrialSummary& t : eval.trials) {
    WorldConfig wc = cfg;
    wc.seed = t.seed;
    World w(wc);
    while (!w.is_terminal()) w.step();
    REQUIRE(w.match_log().size() == t.pairs.size());
    for (std::size_t i = 0; i < t.pairs.size(); ++i) {
      CHECK(w.match_log()[i].female_label == t.pairs[i].female_label);
      CHECK(w.match_log()[i].male_label == t.pairs[i].male_label);
      CHECK(w.match_log()[i].step == t.pairs[i].step);
    }
  }
}

TEST_CASE("run directories round-trip through replay with identical bytes") {
  WorldConfig base;
  const BaselineRun run = run_baseline(base, {15.0}, 2, 7);

  TempDir dir("masim_test_baseline_run");
  write_baseline_run(dir.path.string(), run, base);
  CHECK(std::filesystem::exists(dir.path / "metadata.json"));
  CHECK(std::filesystem::exists(dir.path / "pairs.csv"));
  CHECK(std::filesystem::exists(dir.path / "summary.json"));

  const ReplayReport report = replay_run(dir.path.string());
  CHECK(report.ok);
  CHECK(report.mismatches.empty());

  // Same run, second directory: byte-identical artifacts.
  TempDir dir2("masim_test_baseline_run2");
  write_baseline_run(dir2.path.string(), run_baseline(base, {15.0}, 2, 7), base);
  for (const char* name : {"metadata.json", "pairs.csv", "summary.json"})
    CHECK(slurp(dir.path / name) == slurp(dir2.path / name));

  // Corrupting a recorded pair breaks replay: flip the first digit after the
  // header line.
  const std::filesystem::path pairs_path = dir.path / "pairs.csv";
  std::string text = slurp(pairs_path);
  const auto header_end = text.find('\n');
  REQUIRE(header_end != std::string::npos);
  for (std::size_t i = header_end; i < text.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(text[i]))) {
      text[i] = text[i] == '9' ? '8' : '9';
      break;
    }
  }
  std::ofstream(pairs_path, std::ios::binary | std::ios::trunc) << text;
  const ReplayReport broken = replay_run(dir.path.string());
  CHECK(!broken.ok);
  CHECK(!broken.mismatches.empty());
}

TEST_CASE("eval run directories replay too") {
  WorldConfig cfg;
  const ModelParams params = ModelParams::init(ModelConfig{}, 13);
  const EvalRun run = run_mixed(cfg, params, 2, 17);
  TempDir dir("masim_test_eval_run");
  write_eval_run(dir.path.string(), run, cfg, "unused.ckpt");
  const ReplayReport report = replay_run(dir.path.string());
  CHECK(report.ok);
}

TEST_CASE("load_run_config validates presence, types, and unknown keys") {
  TempDir dir("masim_test_configs");
  std::filesystem::create_directories(dir.path);
  const auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir.path / name) << body;
    return (dir.path / name).string();
  };

  const std::string good = write("good.json", R"({
    "world": {"side": 50, "view_range": 25.0, "seed": 7},
    "hyperparams": {"episodes": 10, "workers": 1},
    "trials": 4,
    "seed": 9,
    "output_dir": "runs/x"
  })");
  const RunConfig cfg = load_run_config(good, "eval");
  CHECK(cfg.mode == "eval");
  CHECK(cfg.world.side == 50);
  CHECK(cfg.world.seed == 7);
  CHECK(cfg.hp.episodes == 10);
  CHECK(cfg.trials == 4);
  CHECK(cfg.seed == 9);
  CHECK(cfg.output_dir == "runs/x");

  CHECK_THROWS_AS(load_run_config((dir.path / "missing.json").string(), "eval"), ConfigError);
  const std::string bad_json = write("bad.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(bad_json, "eval"), ConfigError);
  const std::string unknown = write("unknown.json", R"({"world": {}, "surprise": 1})");
  CHECK_THROWS_AS(load_run_config(unknown, "eval"), ConfigError);
  const std::string bad_type = write("bad_type.json", R"({"world": {"side": "wide"}})");
  CHECK_THROWS_AS(load_run_config(bad_type, "eval"), ConfigError);
  const std::string bad_world = write("bad_world.json", R"({"world": {"side": -5}})");
  CHECK_THROWS_AS(load_run_config(bad_world, "eval"), ConfigError);
}
