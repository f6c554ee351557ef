#include "prognet/env/reacher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace prognet::env {

namespace {

constexpr double kFirstJointLimit = 2.0;
constexpr double kOtherJointLimit = 2.6;

// Rendered view bounds (see SceneGeometry defaults).
constexpr double kViewMinX = -1.05, kViewMaxX = 1.05, kViewMinY = -0.75, kViewMaxY = 1.35;

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

}  // namespace

std::string to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::none: return "none";
    case TerminationReason::safety: return "safety";
    case TerminationReason::timeout: return "timeout";
  }
  return "?";
}

double EnvConfig::total_length() const {
  if (link_lengths.empty()) return 1.0;
  double s = 0.0;
  for (double l : link_lengths) s += l;
  return s;
}

EnvConfig EnvConfig::resolved() const {
  EnvConfig c = *this;
  if (c.joints < 1 || c.joints > 9) throw EnvConfigError("joint count must be in [1, 9]");
  if (c.link_lengths.empty()) c.link_lengths.assign(c.joints, 1.0 / static_cast<double>(c.joints));
  if (c.link_lengths.size() != c.joints) throw EnvConfigError("link_lengths must have one entry per joint");
  for (double l : c.link_lengths) {
    if (!(l > 0.0)) throw EnvConfigError("link lengths must be positive");
  }
  if (c.joint_limits.empty()) {
    c.joint_limits.assign(c.joints, kOtherJointLimit);
    c.joint_limits[0] = kFirstJointLimit;
  }
  if (c.joint_limits.size() != c.joints) throw EnvConfigError("joint_limits must have one entry per joint");
  for (double l : c.joint_limits) {
    if (!(l > 0.0 && l <= std::numbers::pi)) throw EnvConfigError("joint limits must lie in (0, pi]");
  }
  const double min_link = *std::min_element(c.link_lengths.begin(), c.link_lengths.end());
  if (c.reach_threshold <= 0.0) c.reach_threshold = std::min(c.total_length() / 8.0, 0.9 * min_link);
  if (c.reach_threshold >= min_link) throw EnvConfigError("reach threshold must be below the shortest link length");
  if (!(c.target_width >= 0.0 && c.target_height >= 0.0)) throw EnvConfigError("target area must be non-negative");
  const double x0 = c.target_center.x - c.target_width / 2, x1 = c.target_center.x + c.target_width / 2;
  const double y0 = c.target_center.y - c.target_height / 2, y1 = c.target_center.y + c.target_height / 2;
  if (x0 < kViewMinX || x1 > kViewMaxX || y0 < kViewMinY || y1 > kViewMaxY) {
    throw EnvConfigError("target area must lie inside the rendered view");
  }
  if (c.max_steps < 1) throw EnvConfigError("max_steps must be positive");
  if (!(c.velocity > 0.0)) throw EnvConfigError("velocity must be positive");
  if (c.image_size < 8) throw EnvConfigError("image_size must be at least 8");
  if (!(c.perturbation_level >= 0.0 && c.perturbation_level <= 1.0)) {
    throw EnvConfigError("perturbation level must lie in [0, 1]");
  }
  if (c.conveyor.speed < 0.0) throw EnvConfigError("conveyor speed must be non-negative");
  if (!(c.conveyor.reversal_probability >= 0.0 && c.conveyor.reversal_probability <= 1.0)) {
    throw EnvConfigError("conveyor reversal probability must lie in [0, 1]");
  }
  if (c.target_hold_episodes < 1) throw EnvConfigError("target_hold_episodes must be positive");
  return c;
}

nlohmann::json to_json(const EnvConfig& c) {
  return {
      {"joints", c.joints},
      {"link_lengths", c.link_lengths},
      {"joint_limits", c.joint_limits},
      {"target_center", {c.target_center.x, c.target_center.y}},
      {"target_width", c.target_width},
      {"target_height", c.target_height},
      {"reach_threshold", c.reach_threshold},
      {"max_steps", c.max_steps},
      {"velocity", c.velocity},
      {"image_size", c.image_size},
      {"perturbation", {{"kind", to_string(c.perturbation)}, {"level", c.perturbation_level}}},
      {"conveyor",
       {{"enabled", c.conveyor.enabled},
        {"speed", c.conveyor.speed},
        {"reversal_probability", c.conveyor.reversal_probability}}},
      {"target_hold_episodes", c.target_hold_episodes},
      {"proprio", c.proprio},
      {"seed", c.seed},
      {"perturbation_seed", c.perturbation_seed ? nlohmann::json(*c.perturbation_seed) : nlohmann::json(nullptr)},
  };
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  try {
    c.joints = j.value("joints", c.joints);
    c.link_lengths = j.value("link_lengths", c.link_lengths);
    c.joint_limits = j.value("joint_limits", c.joint_limits);
    if (j.contains("target_center")) {
      const auto& tc = j.at("target_center");
      c.target_center = {tc.at(0).get<double>(), tc.at(1).get<double>()};
    }
    c.target_width = j.value("target_width", c.target_width);
    c.target_height = j.value("target_height", c.target_height);
    c.reach_threshold = j.value("reach_threshold", c.reach_threshold);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.velocity = j.value("velocity", c.velocity);
    c.image_size = j.value("image_size", c.image_size);
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      c.perturbation = perturbation_kind_from_string(p.value("kind", std::string("none")));
      c.perturbation_level = p.value("level", 0.0);
    }
    if (j.contains("conveyor")) {
      const auto& cv = j.at("conveyor");
      c.conveyor.enabled = cv.value("enabled", c.conveyor.enabled);
      c.conveyor.speed = cv.value("speed", c.conveyor.speed);
      c.conveyor.reversal_probability = cv.value("reversal_probability", c.conveyor.reversal_probability);
    }
    c.target_hold_episodes = j.value("target_hold_episodes", c.target_hold_episodes);
    c.proprio = j.value("proprio", c.proprio);
    c.seed = j.value("seed", c.seed);
    if (j.contains("perturbation_seed") && !j.at("perturbation_seed").is_null()) {
      c.perturbation_seed = j.at("perturbation_seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw EnvConfigError(std::string("malformed environment config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw EnvConfigError(e.what());
  }
  return c;
}

std::vector<Point> forward_kinematics(std::span<const double> angles, std::span<const double> link_lengths) {
  if (angles.size() != link_lengths.size()) throw nn::DimensionError("forward_kinematics: angle/link count mismatch");
  std::vector<Point> pts;
  pts.reserve(angles.size() + 1);
  Point p{0.0, 0.0};
  pts.push_back(p);
  double phi = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    phi += angles[i];
    p.x += link_lengths[i] * std::sin(phi);
    p.y += link_lengths[i] * std::cos(phi);
    pts.push_back(p);
  }
  return pts;
}

nn::Tensor proprio_features(const ArmState& state, std::span<const double> joint_limits, double velocity) {
  const std::size_t k = state.joint_angles.size();
  if (joint_limits.size() != k || state.joint_velocities.size() != k) {
    throw nn::DimensionError("proprio_features: joint count mismatch");
  }
  nn::Tensor out({2 * k});
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < k; ++i) {
    d[i] = state.joint_angles[i] / joint_limits[i];
    d[k + i] = state.joint_velocities[i] / velocity;
  }
  return out;
}

Point conveyor_update(Point target, int& direction, const EnvConfig& config, std::mt19937_64& rng) {
  const double lo = config.target_center.x - config.target_width / 2;
  const double hi = config.target_center.x + config.target_width / 2;
  if (config.conveyor.reversal_probability > 0.0) {
    std::bernoulli_distribution flip(config.conveyor.reversal_probability);
    if (flip(rng)) direction = -direction;
  }
  target.x += direction * config.conveyor.speed;
  if (target.x >= hi) {
    target.x = hi;
    direction = -1;
  } else if (target.x <= lo) {
    target.x = lo;
    direction = 1;
  }
  return target;
}

ReacherEnv::ReacherEnv(EnvConfig config)
    : config_(config.resolved()),
      perturbation_(Perturbation::draw(config_.perturbation, config_.perturbation_level,
                                      config_.perturbation_seed.value_or(config_.seed))),
      rng_(config_.seed) {
  state_.joint_angles.assign(config_.joints, 0.0);
  state_.joint_velocities.assign(config_.joints, 0.0);
  state_.target = config_.target_center;
}

void ReacherEnv::draw_target() {
  std::uniform_real_distribution<double> ux(-0.5, 0.5);
  const double x = config_.target_center.x + config_.target_width * ux(rng_);
  const double y = config_.target_center.y + config_.target_height * ux(rng_);
  state_.target = {x, y};
  std::bernoulli_distribution dir(0.5);
  conveyor_direction_ = dir(rng_) ? 1 : -1;
}

Observation ReacherEnv::reset() {
  for (std::size_t i = 0; i < config_.joints; ++i) {
    std::uniform_real_distribution<double> u(-config_.joint_limits[i], config_.joint_limits[i]);
    state_.joint_angles[i] = u(rng_);
    state_.joint_velocities[i] = 0.0;
  }
  if (episodes_ % config_.target_hold_episodes == 0) draw_target();
  state_.step_index = 0;
  alive_ = true;
  ++episodes_;
  return observe();
}

Observation ReacherEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  episodes_ = 0;
  return reset();
}

StepResult ReacherEnv::step(std::span<const int> action) {
  if (!alive_) throw nn::UsageError("step called on a terminated episode; call reset first");
  if (action.size() != config_.joints) {
    throw nn::DimensionError("action has " + std::to_string(action.size()) + " entries, expected " +
                             std::to_string(config_.joints));
  }
  for (int a : action) {
    if (a < 0 || a > 2) throw nn::UsageError("action index " + std::to_string(a) + " outside {0, 1, 2}");
  }
  StepResult r;
  bool violated = false;
  for (std::size_t i = 0; i < config_.joints; ++i) {
    const double v = (action[i] - 1) * config_.velocity;
    double a = state_.joint_angles[i] + v;
    const double lim = config_.joint_limits[i];
    if (a > lim || a < -lim) {
      violated = true;
      a = std::clamp(a, -lim, lim);
    }
    state_.joint_angles[i] = a;
    state_.joint_velocities[i] = v;
  }
  ++state_.step_index;
  if (violated) {
    r.terminated = true;
    r.reason = TerminationReason::safety;
  } else {
    if (config_.conveyor.enabled) state_.target = conveyor_update(state_.target, conveyor_direction_, config_, rng_);
    r.reward = within_reach(state_) ? 1.0 : 0.0;
    if (state_.step_index >= config_.max_steps) {
      r.terminated = true;
      r.reason = TerminationReason::timeout;
    }
  }
  if (r.terminated) alive_ = false;
  r.observation = observe();
  return r;
}

void ReacherEnv::set_state(const ArmState& s) {
  if (s.joint_angles.size() != config_.joints || s.joint_velocities.size() != config_.joints) {
    throw nn::DimensionError("set_state: joint count mismatch");
  }
  for (std::size_t i = 0; i < config_.joints; ++i) {
    if (std::abs(s.joint_angles[i]) > config_.joint_limits[i]) throw nn::UsageError("set_state: angle outside joint limits");
  }
  if (s.step_index >= config_.max_steps) throw nn::UsageError("set_state: step_index at or beyond max_steps");
  state_ = s;
  alive_ = true;
}

Point ReacherEnv::end_effector() const {
  return forward_kinematics(state_.joint_angles, config_.link_lengths).back();
}

bool ReacherEnv::within_reach(const ArmState& s) const {
  const Point e = forward_kinematics(s.joint_angles, config_.link_lengths).back();
  return std::hypot(e.x - s.target.x, e.y - s.target.y) <= config_.reach_threshold;
}

SceneGeometry ReacherEnv::geometry() const {
  SceneGeometry g;
  g.joints = forward_kinematics(state_.joint_angles, config_.link_lengths);
  g.target = state_.target;
  const double scale = config_.total_length();
  g.link_half_width = 0.05 * scale;
  g.effector_radius = 0.06 * scale;
  g.target_radius = 0.08 * scale;
  g.table_y_min = config_.target_center.y - config_.target_height / 2 - 0.05;
  g.table_y_max = config_.target_center.y + config_.target_height / 2 + 0.05;
  return g;
}

nn::Tensor ReacherEnv::render_clean() const { return render_scene(geometry(), config_.image_size); }

Observation ReacherEnv::observe() const {
  Observation o;
  o.rgb = perturbation_.apply(render_clean());
  if (config_.proprio) o.proprio = proprio_features(state_, config_.joint_limits, config_.velocity);
  return o;
}

namespace {

// Two-link analytic inverse kinematics; returns up to two (q1, q2) solutions.
std::vector<std::array<double, 2>> two_link_ik(double l1, double l2, Point t) {
  const double d2 = t.x * t.x + t.y * t.y;
  double c2 = (d2 - l1 * l1 - l2 * l2) / (2 * l1 * l2);
  c2 = std::clamp(c2, -1.0, 1.0);
  const double base = std::atan2(t.x, t.y);
  std::vector<std::array<double, 2>> out;
  for (double sign : {1.0, -1.0}) {
    const double q2 = sign * std::acos(c2);
    const double q1 = base - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
    out.push_back({wrap_angle(q1), q2});
  }
  return out;
}

double effector_distance(const EnvConfig& c, const std::vector<double>& angles, Point target) {
  const Point e = forward_kinematics(angles, c.link_lengths).back();
  return std::hypot(e.x - target.x, e.y - target.y);
}

}  // namespace

std::vector<int> expert_action(const ReacherEnv& env) {
  const EnvConfig& c = env.config();
  const ArmState& s = env.state();
  const std::size_t k = c.joints;
  std::vector<int> action(k, Action::zero);
  if (effector_distance(c, s.joint_angles, s.target) <= 0.5 * c.reach_threshold) return action;

  if (k == 2) {
    const auto sols = two_link_ik(c.link_lengths[0], c.link_lengths[1], s.target);
    double best = std::numeric_limits<double>::infinity();
    const std::array<double, 2>* pick = nullptr;
    for (const auto& q : sols) {
      if (std::abs(q[0]) > c.joint_limits[0] || std::abs(q[1]) > c.joint_limits[1]) continue;
      const double d = std::abs(q[0] - s.joint_angles[0]) + std::abs(q[1] - s.joint_angles[1]);
      if (d < best) {
        best = d;
        pick = &q;
      }
    }
    if (pick != nullptr) {
      for (std::size_t i = 0; i < 2; ++i) {
        const double diff = (*pick)[i] - s.joint_angles[i];
        if (diff > 0.5 * c.velocity) action[i] = Action::positive;
        else if (diff < -0.5 * c.velocity) action[i] = Action::negative;
      }
      // Prefer holding still once the step would not improve on a reaching pose.
      std::vector<double> next = s.joint_angles;
      for (std::size_t i = 0; i < 2; ++i) next[i] += (action[i] - 1) * c.velocity;
      if (effector_distance(c, s.joint_angles, s.target) <= c.reach_threshold &&
          effector_distance(c, next, s.target) > c.reach_threshold) {
        action.assign(k, Action::zero);
      }
      return action;
    }
  }

  // Greedy search over joint action combinations, staying inside the limits.
  std::size_t combos = 1;
  for (std::size_t i = 0; i < k; ++i) combos *= 3;
  double best = effector_distance(c, s.joint_angles, s.target);
  std::vector<double> next(k);
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t rest = code;
    bool safe = true;
    std::vector<int> cand(k);
    for (std::size_t i = 0; i < k; ++i) {
      cand[i] = static_cast<int>(rest % 3);
      rest /= 3;
      next[i] = s.joint_angles[i] + (cand[i] - 1) * c.velocity;
      if (std::abs(next[i]) > c.joint_limits[i]) safe = false;
    }
    if (!safe) continue;
    const double d = effector_distance(c, next, s.target);
    if (d < best - 1e-12) {
      best = d;
      action = cand;
    }
  }
  return action;
}

double expert_return(const EnvConfig& config, std::size_t episodes, std::uint64_t seed) {
  EnvConfig c = config;
  c.seed = seed;
  ReacherEnv env(c);
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    env.reset();
    while (env.alive()) total += env.step(expert_action(env)).reward;
  }
  return episodes == 0 ? 0.0 : total / static_cast<double>(episodes);
}

void EpisodeLogger::log(std::size_t episode, const ArmState& state, std::span<const int> action,
                        const StepResult& result) {
  nlohmann::json j = {
      {"episode", episode},
      {"step", state.step_index},
      {"joint_angles", state.joint_angles},
      {"joint_velocities", state.joint_velocities},
      {"target", {state.target.x, state.target.y}},
      {"action", std::vector<int>(action.begin(), action.end())},
      {"reward", result.reward},
      {"terminated", result.terminated},
      {"reason", to_string(result.reason)},
  };
  os_ << j.dump() << '\n';
}

}  // namespace prognet::env
