// Command-line driver for the experiment harness.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "prognet/env/reacher.hpp"
#include "prognet/exp/experiment.hpp"
#include "prognet/rl/a2c.hpp"

namespace {

using namespace prognet;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<bool> deterministic;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  cmd->add_option("--workers", f.workers, "A3C worker count; >1 requires --nondeterministic")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic,!--nondeterministic", f.deterministic,
                "Single-worker, bit-reproducible run (default from the config)");
  cmd->add_flag("--resume", f.resume, "Skip runs whose directory already holds results for this config");
}

exp::ExperimentConfig load(const CommonFlags& f) {
  exp::ExperimentConfig c = exp::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out_dir = *f.out;
  if (f.workers) c.train.workers = *f.workers;
  if (f.deterministic) c.deterministic = *f.deterministic;
  if (f.resume) c.resume = true;
  if (c.deterministic && c.train.workers > 1) {
    std::cerr << "note: deterministic mode runs a single worker\n";
  }
  return c;
}

nlohmann::json summary(const exp::RunOutput& r) {
  nlohmann::json j = exp::to_json(r.record);
  j["dir"] = r.dir.string();
  j["initial_eval_mean"] = r.initial_eval.mean_return;
  j["final_eval_mean"] = r.final_eval.mean_return;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prognet: progressive networks for pixel-based reaching"};
  app.require_subcommand(1);

  CommonFlags train_flags, transfer_flags, sweep_flags, conveyor_flags;
  auto* train = app.add_subcommand("train-sim", "Train a first column on the source simulator");
  add_common(train, train_flags, true);

  auto* transfer = app.add_subcommand("transfer", "Transfer to the target environment");
  add_common(transfer, transfer_flags, true);
  std::optional<std::string> mode;
  transfer->add_option("--mode", mode, "progressive | finetune | scratch (default from the config kind)")
      ->check(CLI::IsMember({"progressive", "finetune", "scratch"}));
  std::optional<std::string> source_run;
  transfer->add_option("--source", source_run, "Source run directory (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "Hyperparameter sweep with log-uniform sampling");
  add_common(sweep, sweep_flags, true);
  std::optional<std::size_t> samples;
  sweep->add_option("--samples", samples, "Number of sampled runs (overrides the config)");

  auto* conveyor = app.add_subcommand("conveyor", "Direct vs curriculum training on the conveyor task");
  add_common(conveyor, conveyor_flags, true);

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a trained run");
  std::string eval_run;
  std::size_t eval_episodes = 20;
  std::uint64_t eval_seed = 0;
  std::string eval_env = "target";
  std::string eval_ckpt = "checkpoint.bin";
  std::optional<std::string> frames, episode_log;
  eval->add_option("--run", eval_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--episodes", eval_episodes, "Episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--env", eval_env, "Environment from the run config")->check(CLI::IsMember({"source", "target"}));
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file inside the run directory");
  eval->add_option("--frames", frames, "Directory for PPM frames of the first episode");
  eval->add_option("--log", episode_log, "JSONL per-step log file");

  auto* report = app.add_subcommand("report", "Summarize runs under a directory");
  std::string report_dir;
  std::size_t window = 21;
  report->add_option("--dir", report_dir, "Directory with runs")->required();
  report->add_option("--window", window, "Median-filter window (odd)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto c = load(train_flags);
      c.kind = exp::ExperimentKind::train_sim;
      std::cout << summary(exp::run_train_sim(c)).dump(2) << '\n';
    } else if (*transfer) {
      auto c = load(transfer_flags);
      if (source_run) c.source_run = *source_run;
      exp::TransferMode m = exp::TransferMode::progressive;
      if (mode) {
        m = *mode == "finetune" ? exp::TransferMode::finetune
            : *mode == "scratch" ? exp::TransferMode::scratch
                                 : exp::TransferMode::progressive;
      } else if (c.kind == exp::ExperimentKind::transfer_finetune) {
        m = exp::TransferMode::finetune;
      } else if (c.kind == exp::ExperimentKind::train_scratch) {
        m = exp::TransferMode::scratch;
      }
      c.kind = m == exp::TransferMode::progressive ? exp::ExperimentKind::transfer_progressive
               : m == exp::TransferMode::finetune  ? exp::ExperimentKind::transfer_finetune
                                                   : exp::ExperimentKind::train_scratch;
      std::cout << summary(exp::run_transfer(c, m)).dump(2) << '\n';
    } else if (*sweep) {
      auto c = load(sweep_flags);
      if (samples) c.sweep.samples = *samples;
      c.kind = exp::ExperimentKind::sweep;
      const auto out = exp::run_sweep(c);
      std::cout << nlohmann::json{{"samples", out.records.size()},
                                  {"median_final_return", out.median_final},
                                  {"iqr_final_return", out.iqr_final},
                                  {"best", exp::to_json(out.records[out.best])}}
                       .dump(2)
                << '\n';
    } else if (*conveyor) {
      auto c = load(conveyor_flags);
      c.kind = exp::ExperimentKind::conveyor_3col;
      const auto out = exp::run_conveyor_3col(c);
      std::cout << nlohmann::json{{"direct_steps_to_80", out.direct_steps_to_80},
                                  {"curriculum_steps_to_80", out.curriculum_steps_to_80},
                                  {"direct_final", out.direct.record.final_median_return},
                                  {"curriculum_final", out.curriculum_third.record.final_median_return}}
                       .dump(2)
                << '\n';
    } else if (*eval) {
      const auto cfg = exp::load_config(exp::fs::path(eval_run) / "config.json");
      env::EnvConfig ec = eval_env == "source" ? cfg.source_env : cfg.target_env;
      net::InputSpec in;
      in.height = in.width = ec.image_size;
      in.proprio_dim = ec.proprio ? 2 * ec.joints : 0;
      const auto net = exp::load_run_network(eval_run, in, eval_ckpt);
      env::ReacherEnv env(ec);
      const auto rep = rl::evaluate(net, env, eval_episodes, eval_seed);
      if (frames || episode_log) {
        std::optional<std::ofstream> log_stream;
        if (episode_log) log_stream.emplace(*episode_log);
        std::optional<env::EpisodeLogger> logger;
        if (log_stream) logger.emplace(*log_stream);
        if (frames) exp::fs::create_directories(*frames);
        auto obs = env.reset(eval_seed);
        auto state = net.initial_state(1);
        std::size_t t = 0;
        if (frames) env::write_ppm(exp::fs::path(*frames) / "frame_000.ppm", obs.rgb);
        while (env.alive()) {
          const auto action = rl::greedy_action(rl::policy(net, obs, state));
          const auto res = env.step(action);
          if (logger) logger->log(0, env.state(), action, res);
          obs = res.observation;
          ++t;
          if (frames) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03zu.ppm", t);
            env::write_ppm(exp::fs::path(*frames) / name, obs.rgb);
          }
        }
      }
      std::cout << nlohmann::json{{"episodes", rep.episodes},
                                  {"mean_return", rep.mean_return},
                                  {"median_return", rep.median_return},
                                  {"success_rate", rep.success_rate}}
                       .dump(2)
                << '\n';
    } else if (*report) {
      const auto rows = exp::export_report(report_dir, window);
      for (const auto& r : rows) {
        std::cout << r.mode << ": runs=" << r.runs << " median=" << r.median << " iqr=" << r.iqr << " [" << r.q1 << ", "
                  << r.q3 << "]\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
