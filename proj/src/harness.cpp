#include "masim/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "masim/policy.hpp"

namespace masim {

using nlohmann::json;

std::pair<double, double> avg_abs_label_diff(const std::vector<MatchRecord>& pairs) {
  if (pairs.empty()) throw MetricError("avg_abs_label_diff: no pairs");
  double sum = 0.0;
  for (const MatchRecord& r : pairs) sum += std::abs(r.female_label - r.male_label);
  const double mean = sum / static_cast<double>(pairs.size());
  double var = 0.0;
  for (const MatchRecord& r : pairs) {
    const double d = std::abs(r.female_label - r.male_label) - mean;
    var += d * d;
  }
  var /= static_cast<double>(pairs.size());  // population variance
  return {mean, std::sqrt(var)};
}

double group_avg_diff(const std::vector<MatchRecord>& pairs, Group group, Gender gender) {
  double sum = 0.0;
  int count = 0;
  for (const MatchRecord& r : pairs) {
    if (gender == Gender::Female && r.female_group == group) {
      sum += r.male_label - r.female_label;
      count += 1;
    } else if (gender == Gender::Male && r.male_group == group) {
      sum += r.female_label - r.male_label;
      count += 1;
    }
  }
  if (count == 0) throw MetricError("group_avg_diff: no matched agents in selection");
  return sum / count;
}

double group_avg_diff_combined(const std::vector<MatchRecord>& pairs, Group group) {
  double sum = 0.0;
  int count = 0;
  for (const MatchRecord& r : pairs) {
    if (r.female_group == group) {
      sum += r.male_label - r.female_label;
      count += 1;
    }
    if (r.male_group == group) {
      sum += r.female_label - r.male_label;
      count += 1;
    }
  }
  if (count == 0) throw MetricError("group_avg_diff: no matched agents in selection");
  return sum / count;
}

namespace {

TrialSummary summarize_world(const World& world, int trial_id, std::uint64_t seed,
                             bool with_groups) {
  TrialSummary s;
  s.trial_id = trial_id;
  s.seed = seed;
  s.view_range = world.config().view_range;
  s.steps = world.step_count();
  s.pairs = world.match_log();
  if (!s.pairs.empty()) {
    const auto [mean, sd] = avg_abs_label_diff(s.pairs);
    s.avg_abs_diff = mean;
    s.std_abs_diff = sd;
  }
  if (with_groups) {
    auto per_gender = [&s](Group g, Gender gen) -> std::optional<double> {
      try {
        return group_avg_diff(s.pairs, g, gen);
      } catch (const MetricError&) {
        return std::nullopt;
      }
    };
    auto combined = [&s](Group g) -> std::optional<double> {
      try {
        return group_avg_diff_combined(s.pairs, g);
      } catch (const MetricError&) {
        return std::nullopt;
      }
    };
    s.cgr_avg_diff_f = per_gender(Group::Control, Gender::Female);
    s.cgr_avg_diff_m = per_gender(Group::Control, Gender::Male);
    s.cgr_avg_diff = combined(Group::Control);
    s.egr_avg_diff_f = per_gender(Group::Experimental, Gender::Female);
    s.egr_avg_diff_m = per_gender(Group::Experimental, Gender::Male);
    s.egr_avg_diff = combined(Group::Experimental);
  }
  return s;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  int count = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      count += 1;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

}  // namespace

BaselineRun run_baseline(const WorldConfig& base, const std::vector<double>& view_ranges,
                         int trials_per_range, std::uint64_t seed) {
  if (view_ranges.empty()) throw ConfigError("run_baseline: view_ranges must be non-empty");
  if (trials_per_range <= 0) throw ConfigError("run_baseline: trials_per_range must be > 0");

  BaselineRun run;
  run.view_ranges = view_ranges;
  run.trials_per_range = trials_per_range;
  run.seed = seed;
  for (std::size_t ri = 0; ri < view_ranges.size(); ++ri) {
    std::vector<std::optional<double>> trial_avgs;
    for (int ti = 0; ti < trials_per_range; ++ti) {
      WorldConfig cfg = base;
      cfg.view_range = view_ranges[ri];
      // Keyed by the range value, not its position, so reordering or
      // subsetting view_ranges reproduces the same cells.
      cfg.seed = derive_seed(seed, std::bit_cast<std::uint64_t>(cfg.view_range),
                             static_cast<std::uint64_t>(ti));
      cfg.validate();
      World world(cfg);
      while (!world.is_terminal()) world.step();
      const int trial_id = static_cast<int>(ri) * trials_per_range + ti;
      TrialSummary s = summarize_world(world, trial_id, cfg.seed, /*with_groups=*/false);
      trial_avgs.push_back(s.avg_abs_diff);
      run.trials.push_back(std::move(s));
    }
    run.range_means.push_back(mean_of(trial_avgs));
  }
  return run;
}

EvalRun run_mixed(const WorldConfig& cfg, const ModelParams& params, int trials,
                  std::uint64_t seed) {
  if (trials <= 0) throw ConfigError("run_mixed: trials must be > 0");
  params.validate();
  if (params.attention.feature_dim() != kFeatureDim)
    throw ShapeError("run_mixed: checkpoint feature width does not match the encoder");

  EvalRun run;
  run.seed = seed;
  for (int ti = 0; ti < trials; ++ti) {
    WorldConfig wc = cfg;
    wc.seed = derive_seed(seed, static_cast<std::uint64_t>(ti), 11);
    wc.validate();
    World world(wc);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ti), 12));
    while (!world.is_terminal()) {
      std::map<int, AgentAction> overrides;
      for (const Agent& a : world.agents()) {
        if (a.group != Group::Experimental || a.paired()) continue;
        const Observation obs = encode_observation(world, a.id);
        const ActResult r = act(params, obs, rng, /*greedy=*/true);
        overrides[a.id] = catalog_to_action(world, a.id, r.action);
      }
      world.step(overrides);
    }
    run.trials.push_back(summarize_world(world, ti, wc.seed, /*with_groups=*/true));
  }

  std::vector<std::optional<double>> avgs, stds, egrs, cgrs;
  for (const TrialSummary& s : run.trials) {
    avgs.push_back(s.avg_abs_diff);
    stds.push_back(s.std_abs_diff);
    egrs.push_back(s.egr_avg_diff);
    cgrs.push_back(s.cgr_avg_diff);
  }
  run.mean_avg_abs_diff = mean_of(avgs);
  run.mean_std_abs_diff = mean_of(stds);
  run.mean_egr_avg_diff = mean_of(egrs);
  run.mean_cgr_avg_diff = mean_of(cgrs);
  return run;
}

SecretaryDiagnostic secretary_cutoff_diagnostic(int L) {
  if (L < 2 || L > 10)
    throw ConfigError("secretary_cutoff_diagnostic: L must be in [2, 10]");
  std::vector<int> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), 0);

  SecretaryDiagnostic diag;
  diag.success_prob.assign(static_cast<std::size_t>(L), 0.0);
  long total = 0;
  Agent receiver;
  do {
    total += 1;
    for (int cutoff = 0; cutoff < L; ++cutoff) {
      receiver.first_decline_n = cutoff;
      receiver.offers_received = 0;
      receiver.decline_list.clear();
      int chosen = -1;
      for (int sender : order) {
        const Decision d = respond_to_offer(receiver, sender);
        receiver.offers_received += 1;
        if (d == Decision::Accept) {
          chosen = sender;
          break;
        }
        receiver.decline_list.push_back(sender);
      }
      if (chosen == L - 1) diag.success_prob[static_cast<std::size_t>(cutoff)] += 1.0;
    }
  } while (std::next_permutation(order.begin(), order.end()));

  for (double& p : diag.success_prob) p /= static_cast<double>(total);
  diag.best_cutoff = static_cast<int>(
      std::max_element(diag.success_prob.begin(), diag.success_prob.end()) -
      diag.success_prob.begin());
  return diag;
}

// ---------------------------------------------------------------------------
// Run directory I/O.

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json world_config_json(const WorldConfig& cfg) {
  return json{{"side", cfg.side},
              {"agents_per_gender", cfg.agents_per_gender},
              {"view_range", cfg.view_range},
              {"offer_distance", cfg.offer_distance},
              {"max_steps", cfg.max_steps},
              {"initial_n", cfg.initial_n},
              {"move_speed", cfg.move_speed},
              {"deadlock_patience", cfg.deadlock_patience},
              {"seed", cfg.seed},
              {"experimental_labels", cfg.experimental_labels}};
}

json trial_json(const TrialSummary& s, bool with_groups) {
  json j{{"trial", s.trial_id},
         {"seed", s.seed},
         {"view_range", s.view_range},
         {"steps", s.steps},
         {"matches", s.pairs.size()},
         {"avg_abs_diff", opt_json(s.avg_abs_diff)},
         {"std_abs_diff", opt_json(s.std_abs_diff)}};
  if (with_groups) {
    j["cgr_avg_diff"] = {{"female", opt_json(s.cgr_avg_diff_f)},
                         {"male", opt_json(s.cgr_avg_diff_m)},
                         {"combined", opt_json(s.cgr_avg_diff)}};
    j["egr_avg_diff"] = {{"female", opt_json(s.egr_avg_diff_f)},
                         {"male", opt_json(s.egr_avg_diff_m)},
                         {"combined", opt_json(s.egr_avg_diff)}};
  }
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot open for writing: " + path);
  out << text;
  if (!out.flush()) throw StateError("write failed: " + path);
}

void write_pairs_csv(const std::string& path, const std::vector<TrialSummary>& trials) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot open for writing: " + path);
  out << "trial,step,female_label,male_label,female_group,male_group\n";
  for (const TrialSummary& s : trials) {
    for (const MatchRecord& r : s.pairs) {
      out << s.trial_id << ',' << r.step << ',' << r.female_label << ',' << r.male_label << ','
          << to_string(r.female_group) << ',' << to_string(r.male_group) << '\n';
    }
  }
  if (!out.flush()) throw StateError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StateError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_baseline_run(const std::string& dir, const BaselineRun& run,
                        const WorldConfig& base) {
  std::filesystem::create_directories(dir);
  const std::string run_id = "baseline-" + std::to_string(run.seed);

  json metadata{{"run_id", run_id},
                {"mode", "baseline"},
                {"seed", run.seed},
                {"format_versions", {{"checkpoint", kCheckpointFormatVersion}, {"summary", 1}}},
                {"world", world_config_json(base)},
                {"view_ranges", run.view_ranges},
                {"trials_per_range", run.trials_per_range}};
  write_text(dir + "/metadata.json", metadata.dump(2) + "\n");

  write_pairs_csv(dir + "/pairs.csv", run.trials);

  // Table-1-shaped grid: one row per trial index, one column per view range,
  // closed by the per-range mean row.
  {
    std::ostringstream grid;
    grid << "trial";
    for (double vr : run.view_ranges) {
      char label[32];
      std::snprintf(label, sizeof(label), "view_%.10g", vr);
      grid << ',' << label;
    }
    grid << '\n';
    char cell[64];
    for (int ti = 0; ti < run.trials_per_range; ++ti) {
      grid << (ti + 1);
      for (std::size_t ri = 0; ri < run.view_ranges.size(); ++ri) {
        const TrialSummary& s =
            run.trials[ri * static_cast<std::size_t>(run.trials_per_range) +
                       static_cast<std::size_t>(ti)];
        grid << ',';
        if (s.avg_abs_diff) {
          std::snprintf(cell, sizeof(cell), "%.17g", *s.avg_abs_diff);
          grid << cell;
        }
      }
      grid << '\n';
    }
    grid << "mean";
    for (const auto& m : run.range_means) {
      grid << ',';
      if (m) {
        std::snprintf(cell, sizeof(cell), "%.17g", *m);
        grid << cell;
      }
    }
    grid << '\n';
    write_text(dir + "/baseline_grid.csv", grid.str());
  }

  json per_trial = json::array();
  for (const TrialSummary& s : run.trials) per_trial.push_back(trial_json(s, false));
  json range_means = json::array();
  for (const auto& m : run.range_means) range_means.push_back(opt_json(m));
  json summary{{"run_id", run_id},
               {"mode", "baseline"},
               {"config",
                {{"world", world_config_json(base)},
                 {"view_ranges", run.view_ranges},
                 {"trials_per_range", run.trials_per_range},
                 {"seed", run.seed}}},
               {"per_trial", per_trial},
               {"aggregates", {{"range_means", range_means}}},
               {"paper_targets",
                {{"table1_avg_abs_diff", {{"view_5", 7.71}, {"view_15", 4.44}, {"view_25", 1.02}}}}}};
  write_text(dir + "/summary.json", summary.dump(2) + "\n");
}

void write_eval_run(const std::string& dir, const EvalRun& run, const WorldConfig& cfg,
                    const std::string& checkpoint_path, const std::string& mode) {
  std::filesystem::create_directories(dir);
  const std::string run_id = mode + "-" + std::to_string(run.seed);

  json metadata{{"run_id", run_id},
                {"mode", mode},
                {"seed", run.seed},
                {"format_versions", {{"checkpoint", kCheckpointFormatVersion}, {"summary", 1}}},
                {"world", world_config_json(cfg)},
                {"trials", run.trials.size()},
                {"checkpoint", checkpoint_path}};
  write_text(dir + "/metadata.json", metadata.dump(2) + "\n");

  write_pairs_csv(dir + "/pairs.csv", run.trials);

  json per_trial = json::array();
  for (const TrialSummary& s : run.trials) per_trial.push_back(trial_json(s, true));
  json summary{{"run_id", run_id},
               {"mode", mode},
               {"config",
                {{"world", world_config_json(cfg)},
                 {"trials", run.trials.size()},
                 {"seed", run.seed},
                 {"checkpoint", checkpoint_path}}},
               {"per_trial", per_trial},
               {"aggregates",
                {{"mean_avg_abs_diff", opt_json(run.mean_avg_abs_diff)},
                 {"mean_std_abs_diff", opt_json(run.mean_std_abs_diff)},
                 {"mean_egr_avg_diff", opt_json(run.mean_egr_avg_diff)},
                 {"mean_cgr_avg_diff", opt_json(run.mean_cgr_avg_diff)}}},
               {"paper_targets",
                {{"overall_avg_abs_diff", 7.09},
                 {"overall_std_abs_diff", 5.80},
                 {"egr_avg_diff_band", {1.00, 4.70}}}}};
  write_text(dir + "/summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Replay.

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

Group group_from_string(const std::string& s) {
  if (s == "control") return Group::Control;
  if (s == "experimental") return Group::Experimental;
  throw StateError("pairs.csv: unknown group tag: " + s);
}

std::map<int, std::vector<MatchRecord>> read_pairs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StateError("cannot open for reading: " + path);
  std::map<int, std::vector<MatchRecord>> by_trial;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw StateError("pairs.csv: malformed row: " + line);
    MatchRecord r;
    r.step = std::stoi(f[1]);
    r.female_label = std::stoi(f[2]);
    r.male_label = std::stoi(f[3]);
    r.female_group = group_from_string(f[4]);
    r.male_group = group_from_string(f[5]);
    by_trial[std::stoi(f[0])].push_back(r);
  }
  return by_trial;
}

class MismatchLog {
 public:
  explicit MismatchLog(ReplayReport& report) : report_(report) {}

  void check_double(const std::string& what, const json& recorded, std::optional<double> fresh) {
    const bool recorded_null = recorded.is_null();
    if (recorded_null && !fresh) return;
    if (!recorded_null && fresh && recorded.get<double>() == *fresh) return;
    std::ostringstream ss;
    ss << what << ": summary " << recorded.dump() << " recomputed "
       << (fresh ? std::to_string(*fresh) : "null");
    report_.ok = false;
    report_.mismatches.push_back(ss.str());
  }

  void note(const std::string& msg) {
    report_.ok = false;
    report_.mismatches.push_back(msg);
  }

 private:
  ReplayReport& report_;
};

std::optional<double> opt_from(const std::vector<MatchRecord>& pairs,
                               double (*fn)(const std::vector<MatchRecord>&, Group, Gender),
                               Group g, Gender gen) {
  try {
    return fn(pairs, g, gen);
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

}  // namespace

ReplayReport replay_run(const std::string& dir) {
  ReplayReport report;
  MismatchLog log(report);

  const json metadata = json::parse(read_text(dir + "/metadata.json"));
  const std::string mode = metadata.at("mode").get<std::string>();
  if (mode != "baseline" && mode != "eval" && mode != "eval-untrained") {
    log.note("replay supports baseline/eval runs, got mode: " + mode);
    return report;
  }

  const json summary = json::parse(read_text(dir + "/summary.json"));
  auto by_trial = read_pairs_csv(dir + "/pairs.csv");

  std::vector<std::optional<double>> fresh_avgs, fresh_stds, fresh_egrs, fresh_cgrs;
  std::map<double, std::vector<std::optional<double>>> avgs_by_range;
  std::vector<double> range_order;

  for (const json& tj : summary.at("per_trial")) {
    const int trial = tj.at("trial").get<int>();
    const std::string tag = "trial " + std::to_string(trial);
    const std::vector<MatchRecord> pairs = by_trial.count(trial) ? by_trial[trial]
                                                                 : std::vector<MatchRecord>{};
    if (tj.at("matches").get<std::size_t>() != pairs.size()) {
      log.note(tag + " matches: summary " + tj.at("matches").dump() + " pairs.csv " +
               std::to_string(pairs.size()));
    }

    std::optional<double> avg, sd;
    if (!pairs.empty()) {
      const auto [m, s] = avg_abs_label_diff(pairs);
      avg = m;
      sd = s;
    }
    log.check_double(tag + " avg_abs_diff", tj.at("avg_abs_diff"), avg);
    log.check_double(tag + " std_abs_diff", tj.at("std_abs_diff"), sd);
    fresh_avgs.push_back(avg);
    fresh_stds.push_back(sd);

    const double vr = tj.at("view_range").get<double>();
    if (!avgs_by_range.count(vr)) range_order.push_back(vr);
    avgs_by_range[vr].push_back(avg);

    if (tj.contains("egr_avg_diff")) {
      auto check_group = [&](const char* key, Group g) {
        const json& gj = tj.at(key);
        log.check_double(tag + " " + key + ".female", gj.at("female"),
                         opt_from(pairs, group_avg_diff, g, Gender::Female));
        log.check_double(tag + " " + key + ".male", gj.at("male"),
                         opt_from(pairs, group_avg_diff, g, Gender::Male));
        std::optional<double> comb;
        try {
          comb = group_avg_diff_combined(pairs, g);
        } catch (const MetricError&) {
        }
        log.check_double(tag + " " + key + ".combined", gj.at("combined"), comb);
        if (g == Group::Experimental) fresh_egrs.push_back(comb);
        if (g == Group::Control) fresh_cgrs.push_back(comb);
      };
      check_group("cgr_avg_diff", Group::Control);
      check_group("egr_avg_diff", Group::Experimental);
    }
  }

  const json& agg = summary.at("aggregates");
  if (mode == "baseline") {
    const auto ranges = summary.at("config").at("view_ranges").get<std::vector<double>>();
    const json& means = agg.at("range_means");
    if (means.size() != ranges.size()) {
      log.note("aggregates.range_means size does not match config.view_ranges");
    } else {
      for (std::size_t i = 0; i < ranges.size(); ++i) {
        const auto it = avgs_by_range.find(ranges[i]);
        log.check_double("aggregates.range_means[" + std::to_string(i) + "]", means[i],
                         it == avgs_by_range.end() ? std::nullopt : mean_of(it->second));
      }
    }
  } else {
    log.check_double("aggregates.mean_avg_abs_diff", agg.at("mean_avg_abs_diff"),
                     mean_of(fresh_avgs));
    log.check_double("aggregates.mean_std_abs_diff", agg.at("mean_std_abs_diff"),
                     mean_of(fresh_stds));
    log.check_double("aggregates.mean_egr_avg_diff", agg.at("mean_egr_avg_diff"),
                     mean_of(fresh_egrs));
    log.check_double("aggregates.mean_cgr_avg_diff", agg.at("mean_cgr_avg_diff"),
                     mean_of(fresh_cgrs));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Config file loading.

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& scope, std::vector<std::string>& problems) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      problems.push_back("unknown key " + scope + key);
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path, const std::string& mode) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  } catch (const StateError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  RunConfig rc;
  rc.mode = mode;
  std::vector<std::string> problems;

  reject_unknown_keys(j,
                      {"world", "hyperparams", "trials", "view_ranges", "trials_per_range",
                       "seed", "output_dir", "checkpoint", "mode"},
                      "", problems);
  if (j.contains("mode") && j.at("mode").get<std::string>() != mode)
    problems.push_back("config mode does not match the subcommand");

  try {
    if (j.contains("world")) {
      const json& w = j.at("world");
      reject_unknown_keys(w,
                          {"side", "agents_per_gender", "view_range", "offer_distance",
                           "max_steps", "initial_n", "move_speed", "deadlock_patience", "seed",
                           "experimental_labels"},
                          "world.", problems);
      rc.world.side = w.value("side", rc.world.side);
      rc.world.agents_per_gender = w.value("agents_per_gender", rc.world.agents_per_gender);
      rc.world.view_range = w.value("view_range", rc.world.view_range);
      rc.world.offer_distance = w.value("offer_distance", rc.world.offer_distance);
      rc.world.max_steps = w.value("max_steps", rc.world.max_steps);
      rc.world.initial_n = w.value("initial_n", rc.world.initial_n);
      rc.world.move_speed = w.value("move_speed", rc.world.move_speed);
      rc.world.deadlock_patience = w.value("deadlock_patience", rc.world.deadlock_patience);
      rc.world.seed = w.value("seed", rc.world.seed);
      if (w.contains("experimental_labels"))
        rc.world.experimental_labels = w.at("experimental_labels").get<std::vector<int>>();
    }
    if (j.contains("hyperparams")) {
      const json& h = j.at("hyperparams");
      reject_unknown_keys(h,
                          {"gamma", "lr", "rollout_len", "entropy_coeff", "value_coeff",
                           "workers", "episodes", "grad_clip"},
                          "hyperparams.", problems);
      rc.hp.gamma = h.value("gamma", rc.hp.gamma);
      rc.hp.lr = h.value("lr", rc.hp.lr);
      rc.hp.rollout_len = h.value("rollout_len", rc.hp.rollout_len);
      rc.hp.entropy_coeff = h.value("entropy_coeff", rc.hp.entropy_coeff);
      rc.hp.value_coeff = h.value("value_coeff", rc.hp.value_coeff);
      rc.hp.workers = h.value("workers", rc.hp.workers);
      rc.hp.episodes = h.value("episodes", rc.hp.episodes);
      rc.hp.grad_clip = h.value("grad_clip", rc.hp.grad_clip);
    }
    rc.trials = j.value("trials", rc.trials);
    if (j.contains("view_ranges")) rc.view_ranges = j.at("view_ranges").get<std::vector<double>>();
    rc.trials_per_range = j.value("trials_per_range", rc.trials_per_range);
    rc.seed = j.value("seed", rc.seed);
    rc.output_dir = j.value("output_dir", rc.output_dir);
    rc.checkpoint = j.value("checkpoint", rc.checkpoint);
  } catch (const json::exception& e) {
    problems.push_back(std::string("malformed value: ") + e.what());
  }

  if (mode == "train" && (!j.contains("hyperparams") || !j.at("hyperparams").contains("episodes")))
    problems.push_back("missing required key hyperparams.episodes");

  // Semantic validation happens here too so a bad config fails at load time
  // with every problem named, not at first use.
  if (problems.empty()) {
    try {
      rc.world.validate();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
    try {
      rc.hp.validate();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }

  if (!problems.empty()) {
    std::string msg = "config errors in " + path + ":";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return rc;
}

}  // namespace masim
