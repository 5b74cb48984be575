#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "masim/a3c.hpp"
#include "masim/harness.hpp"

namespace {

using masim::RunConfig;

RunConfig config_or_defaults(const std::string& path, const std::string& mode) {
  if (path.empty()) return RunConfig{};
  return masim::load_run_config(path, mode);
}

nlohmann::json world_json(const masim::WorldConfig& w) {
  return {{"side", w.side},
          {"agents_per_gender", w.agents_per_gender},
          {"view_range", w.view_range},
          {"offer_distance", w.offer_distance},
          {"max_steps", w.max_steps},
          {"initial_n", w.initial_n},
          {"move_speed", w.move_speed},
          {"deadlock_patience", w.deadlock_patience},
          {"experimental_labels", w.experimental_labels}};
}

nlohmann::json hp_json(const masim::Hyperparams& hp) {
  return {{"gamma", hp.gamma},
          {"lr", hp.lr},
          {"rollout_len", hp.rollout_len},
          {"entropy_coeff", hp.entropy_coeff},
          {"value_coeff", hp.value_coeff},
          {"workers", hp.workers},
          {"episodes", hp.episodes},
          {"grad_clip", hp.grad_clip}};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw masim::StateError("cannot open for writing: " + path);
  out << text;
  if (!out.flush()) throw masim::StateError("write failed: " + path);
}

int cmd_baseline(RunConfig rc) {
  if (rc.output_dir.empty()) rc.output_dir = "runs/baseline";
  rc.world.validate();
  const masim::BaselineRun run =
      masim::run_baseline(rc.world, rc.view_ranges, rc.trials_per_range, rc.seed);
  masim::write_baseline_run(rc.output_dir, run, rc.world);
  std::cout << "baseline run written to " << rc.output_dir << "\n";
  for (std::size_t i = 0; i < run.view_ranges.size(); ++i) {
    std::cout << "  view " << run.view_ranges[i] << ": mean avg_abs_diff ";
    if (run.range_means[i])
      std::cout << *run.range_means[i] << "\n";
    else
      std::cout << "n/a\n";
  }
  return 0;
}

int cmd_train(RunConfig rc) {
  if (rc.output_dir.empty()) rc.output_dir = "runs/train";
  rc.world.validate();
  rc.hp.validate();
  const masim::TrainResult result = masim::train(rc.world, rc.hp, rc.seed);

  std::filesystem::create_directories(rc.output_dir);
  nlohmann::json metadata{
      {"run_id", "train-" + std::to_string(rc.seed)},
      {"mode", "train"},
      {"seed", rc.seed},
      {"format_versions", {{"checkpoint", masim::kCheckpointFormatVersion}, {"summary", 1}}},
      {"world", world_json(rc.world)},
      {"hyperparams", hp_json(rc.hp)},
      {"final_version", result.final_version}};
  write_file(rc.output_dir + "/metadata.json", metadata.dump(2) + "\n");
  masim::write_trace_csv(rc.output_dir + "/trace.csv", result.trace);
  masim::save_model(rc.output_dir + "/checkpoint.bin", result.params, result.adam);

  double tail_egr = 0.0;
  int tail = 0;
  for (std::size_t i = result.trace.size() >= 50 ? result.trace.size() - 50 : 0;
       i < result.trace.size(); ++i) {
    tail_egr += result.trace[i].egr_avg_diff;
    tail += 1;
  }
  std::cout << "trained " << rc.hp.episodes << " episodes (" << result.final_version
            << " gradient applications); checkpoint in " << rc.output_dir << "\n";
  if (tail > 0)
    std::cout << "  mean E.Gr.Avg.Diff over last " << tail << " episodes: " << tail_egr / tail
              << "\n";
  return 0;
}

int cmd_eval(RunConfig rc, const std::string& mode) {
  if (rc.output_dir.empty()) rc.output_dir = "runs/eval";
  if (rc.checkpoint.empty())
    throw masim::ConfigError("eval: missing required key checkpoint (use --checkpoint)");
  rc.world.validate();
  const masim::LoadedModel loaded = masim::load_model(rc.checkpoint);
  const masim::EvalRun run = masim::run_mixed(rc.world, loaded.params, rc.trials, rc.seed);
  masim::write_eval_run(rc.output_dir, run, rc.world, rc.checkpoint, mode);
  std::cout << "eval run written to " << rc.output_dir << "\n";
  auto show = [](const char* name, const std::optional<double>& v) {
    std::cout << "  " << name << ": ";
    if (v)
      std::cout << *v << "\n";
    else
      std::cout << "n/a\n";
  };
  show("mean avg_abs_diff", run.mean_avg_abs_diff);
  show("mean std_abs_diff", run.mean_std_abs_diff);
  show("mean E.Gr.Avg.Diff", run.mean_egr_avg_diff);
  show("mean C.Gr.Avg.Diff", run.mean_cgr_avg_diff);
  return 0;
}

int cmd_replay(const std::string& dir) {
  const masim::ReplayReport report = masim::replay_run(dir);
  if (report.ok) {
    std::cout << "replay ok: all metrics reproduced exactly\n";
    return 0;
  }
  std::cerr << "replay found " << report.mismatches.size() << " mismatch(es):\n";
  for (const std::string& m : report.mismatches) std::cerr << "  " << m << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masim: assortative-matching simulator with an embedded MA-A3C trainer"};
  app.require_subcommand(1);

  std::string b_config, b_out;
  std::uint64_t b_seed = 0;
  CLI::App* baseline = app.add_subcommand("baseline", "View-range sweep with baseline agents");
  baseline->add_option("--config", b_config, "JSON run config");
  baseline->add_option("--seed", b_seed, "base seed");
  baseline->add_option("--out", b_out, "output directory");

  std::string t_config, t_out;
  std::uint64_t t_seed = 0;
  int t_workers = 0;
  bool t_deterministic = false;
  CLI::App* train = app.add_subcommand("train", "Train the MA-A3C policy");
  train->add_option("--config", t_config, "JSON run config (required)");
  train->add_option("--seed", t_seed, "base seed");
  train->add_option("--out", t_out, "output directory");
  train->add_option("--workers", t_workers, "worker count override");
  train->add_flag("--deterministic", t_deterministic, "force a single worker");

  std::string e_config, e_out, e_checkpoint;
  std::uint64_t e_seed = 0;
  CLI::App* eval = app.add_subcommand("eval", "Greedy evaluation from a checkpoint");
  eval->add_option("--config", e_config, "JSON run config");
  eval->add_option("--seed", e_seed, "base seed");
  eval->add_option("--out", e_out, "output directory");
  eval->add_option("--checkpoint", e_checkpoint, "model checkpoint path");

  std::string r_dir;
  CLI::App* replay = app.add_subcommand("replay", "Recompute metrics from a recorded run");
  replay->add_option("run_dir", r_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (baseline->parsed()) {
      RunConfig rc = config_or_defaults(b_config, "baseline");
      if (baseline->count("--seed")) rc.seed = b_seed;
      if (baseline->count("--out")) rc.output_dir = b_out;
      return cmd_baseline(std::move(rc));
    }
    if (train->parsed()) {
      if (t_config.empty())
        throw masim::ConfigError(
            "train requires --config; missing required key hyperparams.episodes");
      RunConfig rc = masim::load_run_config(t_config, "train");
      if (train->count("--seed")) rc.seed = t_seed;
      if (train->count("--out")) rc.output_dir = t_out;
      if (train->count("--workers")) rc.hp.workers = t_workers;
      if (t_deterministic) rc.hp.workers = 1;
      return cmd_train(std::move(rc));
    }
    if (eval->parsed()) {
      RunConfig rc = config_or_defaults(e_config, "eval");
      if (eval->count("--seed")) rc.seed = e_seed;
      if (eval->count("--out")) rc.output_dir = e_out;
      if (eval->count("--checkpoint")) rc.checkpoint = e_checkpoint;
      return cmd_eval(std::move(rc), "eval");
    }
    if (replay->parsed()) return cmd_replay(r_dir);
  } catch (const masim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
