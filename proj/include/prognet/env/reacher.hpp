#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prognet/env/render.hpp"
#include "prognet/nn/tensor.hpp"

namespace prognet::env {

class EnvConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-joint action index.
enum Action : int { negative = 0, zero = 1, positive = 2 };

enum class TerminationReason { none, safety, timeout };
std::string to_string(TerminationReason r);

struct ConveyorConfig {
  bool enabled = false;
  double speed = 0.02;                 // workspace units per step along x
  double reversal_probability = 0.05;  // per step
};

struct EnvConfig {
  std::size_t joints = 2;
  /// Empty: equal links summing to 1.
  std::vector<double> link_lengths;
  /// Symmetric limits |angle_i| <= joint_limits[i]. Empty: defaults.
  std::vector<double> joint_limits;
  Point target_center{0.0, 0.6};
  double target_width = 0.5;
  double target_height = 0.375;
  /// <= 0 selects 1/8 of the total arm length (capped below the shortest link).
  double reach_threshold = 0.0;
  std::size_t max_steps = 50;
  double velocity = 0.2;  // radians per step for the non-zero actions
  std::size_t image_size = 64;
  PerturbationKind perturbation = PerturbationKind::none;
  double perturbation_level = 0.0;
  ConveyorConfig conveyor;
  /// A new target is drawn every this many episodes.
  std::size_t target_hold_episodes = 1;
  bool proprio = false;
  std::uint64_t seed = 0;
  /// Seed for the perturbation draw; unset uses `seed`.
  std::optional<std::uint64_t> perturbation_seed;

  /// Fills defaulted fields and validates; throws EnvConfigError.
  [[nodiscard]] EnvConfig resolved() const;
  [[nodiscard]] double total_length() const;
};

nlohmann::json to_json(const EnvConfig& c);
EnvConfig env_config_from_json(const nlohmann::json& j);

struct ArmState {
  std::vector<double> joint_angles;
  std::vector<double> joint_velocities;
  Point target;
  std::size_t step_index = 0;
};

struct Observation {
  nn::Tensor rgb;                     // [3, H, W] in [0, 1]
  std::optional<nn::Tensor> proprio;  // [2K]
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  TerminationReason reason = TerminationReason::none;
};

/// Joint positions from the base: K + 1 points, the last is the end effector.
std::vector<Point> forward_kinematics(std::span<const double> angles, std::span<const double> link_lengths);

/// Angles normalized by joint limits, then velocities normalized by the action velocity.
nn::Tensor proprio_features(const ArmState& state, std::span<const double> joint_limits, double velocity);

/// Moves the target along x; reverses at random and always at the area edges.
Point conveyor_update(Point target, int& direction, const EnvConfig& config, std::mt19937_64& rng);

/// Planar K-joint kinematic reacher with sparse per-step reward.
///
/// All randomness comes from the config seed (or an explicit reset seed),
/// so (seed, action sequence) determines every StepResult.
class ReacherEnv {
 public:
  explicit ReacherEnv(EnvConfig config);

  Observation reset();
  /// Reseeds the episode stream, then resets.
  Observation reset(std::uint64_t seed);
  StepResult step(std::span<const int> action);

  [[nodiscard]] Observation observe() const;
  [[nodiscard]] const ArmState& state() const { return state_; }
  /// Replaces the arm/target state of a live episode (tests and tools).
  void set_state(const ArmState& state);
  [[nodiscard]] bool alive() const { return alive_; }
  [[nodiscard]] const EnvConfig& config() const { return config_; }
  [[nodiscard]] const Perturbation& perturbation() const { return perturbation_; }
  [[nodiscard]] Point end_effector() const;
  [[nodiscard]] bool within_reach(const ArmState& s) const;
  [[nodiscard]] std::size_t episode_index() const { return episodes_; }

  /// Raw (unperturbed) and observed renders of the current state.
  [[nodiscard]] nn::Tensor render_clean() const;

 private:
  [[nodiscard]] SceneGeometry geometry() const;
  void draw_target();

  EnvConfig config_;
  Perturbation perturbation_;
  std::mt19937_64 rng_;
  ArmState state_;
  bool alive_ = false;
  std::size_t episodes_ = 0;
  int conveyor_direction_ = 1;
};

/// Scripted controller moving the effector toward the target; its mean
/// return is the "max achievable" reference for learning curves.
std::vector<int> expert_action(const ReacherEnv& env);

/// Mean return of the scripted controller over `episodes` episodes.
double expert_return(const EnvConfig& config, std::size_t episodes, std::uint64_t seed);

/// One line-delimited JSON record per step.
class EpisodeLogger {
 public:
  explicit EpisodeLogger(std::ostream& os) : os_(os) {}
  void log(std::size_t episode, const ArmState& state, std::span<const int> action, const StepResult& result);

 private:
  std::ostream& os_;
};

}  // namespace prognet::env
