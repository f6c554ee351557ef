#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prognet/env/reacher.hpp"
#include "prognet/net/column_spec.hpp"
#include "prognet/net/network.hpp"
#include "prognet/rl/a2c.hpp"

namespace prognet::exp {

namespace fs = std::filesystem;

class ExperimentConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { train_sim, transfer_progressive, transfer_finetune, train_scratch, conveyor_3col, sweep };
std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);
bool is_transfer(ExperimentKind k);

struct SweepConfig {
  std::size_t samples = 30;
  /// Kind of each sampled run.
  ExperimentKind mode = ExperimentKind::transfer_progressive;
  std::pair<double, double> learning_rate{5e-5, 5e-3};
  std::pair<double, double> entropy_cost{1e-5, 1e-2};
};

struct ConveyorArms {
  /// Second column: vision and proprioception.
  net::ColumnSpec second = net::with_proprio(net::narrow_recurrent(2), 32);
  /// Third column: proprioception only.
  net::ColumnSpec third = net::proprio_only(2, 32, 32, 0);
  /// Steps spent on the static task by the curriculum arm's second column.
  std::size_t static_steps = 60000;
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  ExperimentKind kind = ExperimentKind::train_sim;
  std::uint64_t seed = 0;
  fs::path out_dir = "runs/default";
  env::EnvConfig source_env;
  env::EnvConfig target_env;
  /// Column trained by this experiment: the first column for train-sim,
  /// the new column for progressive transfer, the fresh column for scratch.
  net::ColumnSpec column = net::wide_recurrent(2);
  /// Run directory holding the source column checkpoint (transfer, conveyor).
  std::optional<fs::path> source_run;
  rl::TrainConfig train;
  std::size_t eval_episodes = 20;
  std::size_t smoothing_window = 21;
  std::size_t final_window = 50;
  /// Single-worker, wall-clock-free curves.
  bool deterministic = true;
  /// Reuse a finished run directory whose metadata carries this config's hash.
  bool resume = false;
  SweepConfig sweep;
  ConveyorArms conveyor;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Parses and validates; throws ExperimentConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const fs::path& path);
std::uint64_t config_hash(const ExperimentConfig& c);

struct RunRecord {
  std::string mode;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  double entropy_cost = 0.0;
  double final_median_return = 0.0;
  std::size_t env_steps = 0;
  fs::path curve_path;
  std::string status;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

struct RunOutput {
  RunRecord record;
  rl::LearningCurve curve;
  fs::path dir;
  /// Greedy evaluation on the training environment before and after training.
  rl::EvalReport initial_eval;
  rl::EvalReport final_eval;
};

/// Trains the configured column alone on the source environment. The run
/// directory receives config.json, architecture.json, checkpoint.bin (best
/// trailing-median weights), final.bin, curve.csv, curve_smoothed.csv and metadata.json.
RunOutput run_train_sim(const ExperimentConfig& config);

enum class TransferMode { progressive, finetune, scratch };
std::string to_string(TransferMode m);

/// Trains on the target environment starting from the source run (progressive,
/// finetune) or from a fresh column (scratch).
RunOutput run_transfer(const ExperimentConfig& config, TransferMode mode);

/// Dispatches on config.kind (everything except sweep and conveyor).
RunOutput run_single(const ExperimentConfig& config);

struct SweepOutput {
  std::vector<RunRecord> records;
  std::size_t best = 0;
  double median_final = 0.0;
  double iqr_final = 0.0;
};

/// Runs config.sweep.samples runs of kind config.sweep.mode with log-uniform
/// learning rate and entropy cost; writes records.jsonl and summary.json.
SweepOutput run_sweep(const ExperimentConfig& config);

struct ConveyorOutput {
  RunOutput direct;            // second column trained on the conveyor task
  RunOutput curriculum_static; // second column trained on the static task
  RunOutput curriculum_third;  // third column trained on the conveyor task
  std::size_t direct_steps_to_80 = 0;
  std::size_t curriculum_steps_to_80 = 0;
};

ConveyorOutput run_conveyor_3col(const ExperimentConfig& config);

/// First env_steps at which the median of the last `smoothing_window` episode
/// returns reaches `fraction` of the final median return (curve's total steps if never).
std::size_t steps_to_fraction(const rl::LearningCurve& curve, double fraction, std::size_t smoothing_window,
                              std::size_t final_window);

struct ReportRow {
  std::string mode;
  std::size_t runs = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

/// Scans `dir` recursively for run metadata, writes report.csv (per-mode
/// median/IQR of final returns) and refreshes every run's curve_smoothed.csv.
std::vector<ReportRow> export_report(const fs::path& dir, std::size_t smoothing_window = 21);

/// Loads a run's network and weights; `input_override` replaces the stored input spec
/// (used to add proprioception for later columns). Throws ExperimentConfigError on hash mismatch.
net::ProgressiveNetwork load_run_network(const fs::path& run_dir, const std::optional<net::InputSpec>& input_override = std::nullopt,
                                         const std::string& checkpoint = "checkpoint.bin");

/// Writes the smoothed curve CSV (env_steps, raw, smoothed).
void write_smoothed_csv(const fs::path& path, const rl::LearningCurve& curve, std::size_t window);

}  // namespace prognet::exp
