#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prognet/env/reacher.hpp"
#include "prognet/net/network.hpp"
#include "prognet/nn/tensor.hpp"

namespace prognet::rl {

/// Network and environment disagree (joint count, image size, modalities).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-joint logits (flattened [3K]) and a scalar value for one state.
struct PolicyOutput {
  std::vector<double> logits;
  double value = 0.0;
  [[nodiscard]] std::size_t joints() const { return logits.size() / 3; }
};

/// Samples every joint independently from the softmax of its three logits.
std::vector<int> sample_action(const PolicyOutput& policy, std::mt19937_64& rng);
/// Argmax per joint (ties resolved toward the lower index).
std::vector<int> greedy_action(const PolicyOutput& policy);

/// Entropy of each joint distribution, in nats.
std::vector<double> joint_entropies(const PolicyOutput& policy);

struct Trajectory {
  std::vector<std::vector<int>> actions;
  std::vector<double> rewards;
  std::vector<double> values;
  bool terminal = false;
  /// Value of the state after the last step; must be 0 when terminal.
  double bootstrap_value = 0.0;

  [[nodiscard]] std::size_t size() const { return rewards.size(); }
  /// Checks parallel list lengths and the terminal bootstrap rule.
  void validate() const;
};

struct ReturnsAdvantages {
  std::vector<double> returns;
  std::vector<double> advantages;
};

/// R_t = r_t + gamma R_{t+1}, R_T = bootstrap; A_t = R_t - V(s_t).
ReturnsAdvantages compute_returns(const Trajectory& trajectory, double gamma);

/// Actor-critic loss over a window of T steps:
///   sum_t [ -A_t sum_i log pi_i(a_it) + 0.5 (R_t - V_t)^2 - beta sum_i H(pi_i) ].
/// `logits` is [T, 3K], `values` is [T, 1]; advantages are constants.
/// Throws NumericalFault when any input is not finite.
nn::Tensor a2c_loss(const nn::Tensor& logits, const nn::Tensor& values, std::span<const std::vector<int>> actions,
                    std::span<const double> returns, std::span<const double> advantages, double entropy_cost);

struct RmsPropConfig {
  double decay = 0.99;
  double epsilon = 0.1;
};

/// RMSProp with statistics shared by every worker: ms = decay ms + (1-decay) g^2,
/// theta -= lr g / sqrt(ms + epsilon).
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(std::vector<nn::Parameter*> params, RmsPropConfig config);

  /// Applies `grads` (one span per parameter) after global-norm clipping.
  /// Returns the pre-clip gradient norm.
  double apply(std::span<const std::vector<double>> grads, double learning_rate, double clip_norm);
  [[nodiscard]] std::span<nn::Parameter* const> parameters() const { return params_; }
  [[nodiscard]] const std::vector<std::vector<double>>& statistics() const { return mean_square_; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<double>> mean_square_;
  RmsPropConfig config_;
};

struct TrainConfig {
  double learning_rate = 2e-3;
  double entropy_cost = 1e-3;
  double gamma = 0.99;
  std::size_t t_max = 20;
  std::size_t workers = 1;
  double clip_norm = 40.0;
  RmsPropConfig optimizer;
  std::size_t total_steps = 100000;
  std::uint64_t seed = 0;
  /// Episodes in the trailing window used to track the best weights; 0 disables.
  std::size_t best_window = 50;
  /// Linear decay of the learning rate to zero over total_steps.
  bool anneal_learning_rate = false;

  /// Learning rate after `steps` environment steps.
  [[nodiscard]] double learning_rate_at(std::size_t steps) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpisodeRecord {
  double wall_seconds = 0.0;
  std::size_t env_steps = 0;  // total steps consumed when the episode ended
  std::size_t episode_index = 0;
  double episode_return = 0.0;
  env::TerminationReason reason = env::TerminationReason::none;
};

struct LearningCurve {
  std::vector<EpisodeRecord> episodes;
  std::size_t env_steps = 0;

  /// Median return of the last `window` episodes (all if fewer).
  [[nodiscard]] double final_median(std::size_t window = 50) const;
  /// CSV with header wall_seconds,env_steps,episode_index,return,termination_reason.
  /// `deterministic` writes 0 for wall time.
  void write_csv(std::ostream& os, bool deterministic) const;
  static LearningCurve read_csv(std::istream& is);
};

struct TrainResult {
  LearningCurve curve;
  std::size_t updates = 0;
  /// Parameter values (network order) at the best trailing-median point, if tracked.
  std::optional<std::vector<std::vector<double>>> best_values;
  double best_score = 0.0;
};

/// Checks that `net` can drive `env`; throws ConfigError.
void check_compatible(const net::ProgressiveNetwork& net, const env::EnvConfig& env);

/// Network input for one environment observation (batch of one).
net::ObservationBatch to_batch(const env::Observation& obs);

/// Synchronous single-worker actor-critic training of the trainable parameters of `net`.
TrainResult train_a2c(net::ProgressiveNetwork& net, env::ReacherEnv& env, const TrainConfig& config);

using EnvFactory = std::function<env::ReacherEnv(std::size_t worker)>;

/// Asynchronous training: each worker owns an environment and a network copy,
/// refreshes it from the shared parameters before every rollout, and applies
/// its gradient through the shared optimizer under a lock.
TrainResult train_a3c(net::ProgressiveNetwork& net, const EnvFactory& make_env, const TrainConfig& config);

struct EvalReport {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double median_return = 0.0;
  double success_rate = 0.0;  // episodes with any reward
  std::vector<double> returns;
};

/// Greedy rollouts; the environment is reseeded with `seed` first.
EvalReport evaluate(const net::ProgressiveNetwork& net, env::ReacherEnv& env, std::size_t episodes, std::uint64_t seed,
                    std::optional<std::size_t> output_column = std::nullopt);

/// Policy of `output_column` for one observation, advancing `state`.
PolicyOutput policy(const net::ProgressiveNetwork& net, const env::Observation& obs, net::NetworkState& state,
                    std::optional<std::size_t> output_column = std::nullopt);

}  // namespace prognet::rl
