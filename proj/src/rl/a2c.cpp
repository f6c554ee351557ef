#include "prognet/rl/a2c.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "prognet/nn/ops.hpp"
#include "prognet/nn/tape.hpp"

namespace prognet::rl {

using nn::Tensor;

namespace {

void softmax3(const double* logits, double* out) {
  const double m = std::max({logits[0], logits[1], logits[2]});
  double z = 0.0;
  for (int i = 0; i < 3; ++i) z += (out[i] = std::exp(logits[i] - m));
  for (int i = 0; i < 3; ++i) out[i] /= z;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw nn::NumericalFault(std::string("non-finite value in ") + what);
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<int> sample_action(const PolicyOutput& policy, std::mt19937_64& rng) {
  const std::size_t k = policy.joints();
  check_finite(policy.logits, "policy logits");
  std::vector<int> action(k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    double p[3];
    softmax3(policy.logits.data() + 3 * i, p);
    const double r = u(rng);
    action[i] = r < p[0] ? 0 : (r < p[0] + p[1] ? 1 : 2);
  }
  return action;
}

std::vector<int> greedy_action(const PolicyOutput& policy) {
  std::vector<int> action(policy.joints());
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double* l = policy.logits.data() + 3 * i;
    action[i] = static_cast<int>(std::max_element(l, l + 3) - l);
  }
  return action;
}

std::vector<double> joint_entropies(const PolicyOutput& policy) {
  std::vector<double> h(policy.joints());
  for (std::size_t i = 0; i < h.size(); ++i) {
    double p[3];
    softmax3(policy.logits.data() + 3 * i, p);
    double e = 0.0;
    for (double q : p) {
      if (q > 0.0) e -= q * std::log(q);
    }
    h[i] = e;
  }
  return h;
}

void Trajectory::validate() const {
  const std::size_t n = rewards.size();
  if (actions.size() != n || values.size() != n) {
    throw nn::DimensionError("trajectory lists differ in length: actions " + std::to_string(actions.size()) +
                             ", rewards " + std::to_string(n) + ", values " + std::to_string(values.size()));
  }
  if (terminal && bootstrap_value != 0.0) throw nn::UsageError("terminal trajectory must bootstrap from 0");
}

ReturnsAdvantages compute_returns(const Trajectory& trajectory, double gamma) {
  trajectory.validate();
  const std::size_t n = trajectory.size();
  ReturnsAdvantages out;
  out.returns.resize(n);
  out.advantages.resize(n);
  double r = trajectory.terminal ? 0.0 : trajectory.bootstrap_value;
  for (std::size_t t = n; t-- > 0;) {
    r = trajectory.rewards[t] + gamma * r;
    out.returns[t] = r;
    out.advantages[t] = r - trajectory.values[t];
  }
  return out;
}

Tensor a2c_loss(const Tensor& logits, const Tensor& values, std::span<const std::vector<int>> actions,
                std::span<const double> returns, std::span<const double> advantages, double entropy_cost) {
  if (logits.dim() != 2 || logits.size(1) % 3 != 0) {
    throw nn::DimensionError("a2c_loss: logits must be [T, 3K], got " + nn::to_string(logits.shape()));
  }
  const std::size_t t_len = logits.size(0), width = logits.size(1), k = width / 3;
  if (values.shape() != nn::Shape{t_len, 1}) {
    throw nn::DimensionError("a2c_loss: values " + nn::to_string(values.shape()) + " do not match logits " +
                             nn::to_string(logits.shape()));
  }
  if (actions.size() != t_len || returns.size() != t_len || advantages.size() != t_len) {
    throw nn::DimensionError("a2c_loss: trajectory lengths do not match logits rows");
  }
  check_finite(logits.data(), "logits");
  check_finite(values.data(), "values");
  check_finite(returns, "returns");
  check_finite(advantages, "advantages");
  if (!std::isfinite(entropy_cost)) throw nn::NumericalFault("non-finite entropy cost");

  Tensor weights({t_len, width});
  Tensor targets({t_len, 1});
  auto w = weights.mutable_data();
  auto tg = targets.mutable_data();
  for (std::size_t t = 0; t < t_len; ++t) {
    if (actions[t].size() != k) throw nn::DimensionError("a2c_loss: action width does not match logits");
    for (std::size_t i = 0; i < k; ++i) {
      const int a = actions[t][i];
      if (a < 0 || a > 2) throw nn::UsageError("a2c_loss: action index outside {0, 1, 2}");
      w[t * width + 3 * i + static_cast<std::size_t>(a)] = -advantages[t];
    }
    tg[t] = returns[t];
  }

  const Tensor logp = nn::log_softmax_groups(logits, 3);
  const Tensor p = nn::softmax_groups(logits, 3);
  const Tensor policy_term = nn::sum(nn::mul(logp, weights));
  const Tensor value_term = nn::scale(nn::sum(nn::square(nn::sub(targets, values))), 0.5);
  // sum p log p = -H, so adding beta * sum p log p subtracts the entropy bonus.
  const Tensor entropy_term = nn::scale(nn::sum(nn::mul(p, logp)), entropy_cost);
  const std::vector<Tensor> terms{policy_term, value_term, entropy_term};
  return nn::add_n(terms);
}

RmsProp::RmsProp(std::vector<nn::Parameter*> params, RmsPropConfig config)
    : params_(std::move(params)), config_(config) {
  mean_square_.reserve(params_.size());
  for (auto* p : params_) mean_square_.emplace_back(p->numel(), 0.0);
}

double RmsProp::apply(std::span<const std::vector<double>> grads, double learning_rate, double clip_norm) {
  if (grads.size() != params_.size()) throw nn::DimensionError("RmsProp: gradient count does not match parameters");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params_[i]->numel()) {
      throw nn::DimensionError("RmsProp: gradient size mismatch for " + params_[i]->name);
    }
    for (double g : grads[i]) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw nn::NumericalFault("non-finite gradient norm");
  const double factor = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    nn::Parameter* p = params_[i];
    if (p->frozen) throw nn::UsageError("optimizer step on frozen parameter " + p->name);
    auto v = p->value.mutable_data();
    auto& ms = mean_square_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double g = grads[i][j] * factor;
      ms[j] = config_.decay * ms[j] + (1.0 - config_.decay) * g * g;
      v[j] -= learning_rate * g / std::sqrt(ms[j] + config_.epsilon);
    }
  }
  return norm;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"entropy_cost", c.entropy_cost},
          {"gamma", c.gamma},
          {"t_max", c.t_max},
          {"workers", c.workers},
          {"clip_norm", c.clip_norm},
          {"rmsprop", {{"decay", c.optimizer.decay}, {"epsilon", c.optimizer.epsilon}}},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"best_window", c.best_window},
          {"anneal_learning_rate", c.anneal_learning_rate}};
}

double TrainConfig::learning_rate_at(std::size_t steps) const {
  if (!anneal_learning_rate || total_steps == 0) return learning_rate;
  const double left = 1.0 - static_cast<double>(std::min(steps, total_steps)) / static_cast<double>(total_steps);
  return learning_rate * left;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.entropy_cost = j.value("entropy_cost", c.entropy_cost);
    c.gamma = j.value("gamma", c.gamma);
    c.t_max = j.value("t_max", c.t_max);
    c.workers = j.value("workers", c.workers);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("rmsprop")) {
      c.optimizer.decay = j.at("rmsprop").value("decay", c.optimizer.decay);
      c.optimizer.epsilon = j.at("rmsprop").value("epsilon", c.optimizer.epsilon);
    }
    c.total_steps = j.value("total_steps", c.total_steps);
    c.seed = j.value("seed", c.seed);
    c.best_window = j.value("best_window", c.best_window);
    c.anneal_learning_rate = j.value("anneal_learning_rate", c.anneal_learning_rate);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  if (c.t_max < 1) throw ConfigError("t_max must be positive");
  if (c.workers < 1) throw ConfigError("worker count must be at least 1");
  return c;
}

double LearningCurve::final_median(std::size_t window) const {
  const std::size_t n = episodes.size();
  const std::size_t start = (window == 0 || window >= n) ? 0 : n - window;
  std::vector<double> v;
  for (std::size_t i = start; i < n; ++i) v.push_back(episodes[i].episode_return);
  return median_of(std::move(v));
}

void LearningCurve::write_csv(std::ostream& os, bool deterministic) const {
  os << "wall_seconds,env_steps,episode_index,return,termination_reason\n";
  for (const auto& e : episodes) {
    std::ostringstream wall;
    wall << std::fixed << std::setprecision(6) << (deterministic ? 0.0 : e.wall_seconds);
    std::ostringstream ret;
    ret << std::setprecision(17) << e.episode_return;
    os << wall.str() << ',' << e.env_steps << ',' << e.episode_index << ',' << ret.str() << ','
       << env::to_string(e.reason) << '\n';
  }
}

LearningCurve LearningCurve::read_csv(std::istream& is) {
  LearningCurve c;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty learning-curve file");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[5];
    for (auto& s : f) std::getline(ls, s, ',');
    EpisodeRecord r;
    try {
      r.wall_seconds = std::stod(f[0]);
      r.env_steps = std::stoull(f[1]);
      r.episode_index = std::stoull(f[2]);
      r.episode_return = std::stod(f[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("malformed learning-curve row: " + line);
    }
    r.reason = f[4] == "safety" ? env::TerminationReason::safety
               : f[4] == "timeout" ? env::TerminationReason::timeout
                                   : env::TerminationReason::none;
    c.env_steps = std::max(c.env_steps, r.env_steps);
    c.episodes.push_back(r);
  }
  return c;
}

void check_compatible(const net::ProgressiveNetwork& net, const env::EnvConfig& env) {
  if (net.empty()) throw ConfigError("network has no columns");
  const env::EnvConfig e = env.resolved();
  if (net.joints() != e.joints) {
    throw ConfigError("network heads drive " + std::to_string(net.joints()) + " joints, environment has " +
                      std::to_string(e.joints));
  }
  bool vision = false, proprio = false;
  for (std::size_t k = 0; k < net.num_columns(); ++k) {
    vision = vision || net::uses_vision(net.column(k).spec.inputs);
    proprio = proprio || net::uses_proprio(net.column(k).spec.inputs);
  }
  const auto& in = net.input();
  if (vision && (in.channels != 3 || in.height != e.image_size || in.width != e.image_size)) {
    throw ConfigError("network expects " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                      " images, environment renders " + std::to_string(e.image_size));
  }
  if (proprio && (!e.proprio || in.proprio_dim != 2 * e.joints)) {
    throw ConfigError("network reads proprioception the environment does not provide");
  }
}

net::ObservationBatch to_batch(const env::Observation& obs) {
  net::ObservationBatch b;
  const auto& s = obs.rgb.shape();
  auto d = obs.rgb.data();
  b.rgb = Tensor({1, s[0], s[1], s[2]}, std::vector<double>(d.begin(), d.end()));
  if (obs.proprio) {
    auto p = obs.proprio->data();
    b.proprio = Tensor({1, p.size()}, std::vector<double>(p.begin(), p.end()));
  }
  return b;
}

PolicyOutput policy(const net::ProgressiveNetwork& net, const env::Observation& obs, net::NetworkState& state,
                    std::optional<std::size_t> output_column) {
  nn::NoGradScope no_grad;
  const auto fr = net.forward(to_batch(obs), state, output_column);
  PolicyOutput out;
  auto l = fr.logits.data();
  out.logits.assign(l.begin(), l.end());
  out.value = fr.value.item();
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct FinishedEpisode {
  double episode_return = 0.0;
  env::TerminationReason reason = env::TerminationReason::none;
  std::size_t env_steps = 0;
};

std::mt19937_64 worker_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), std::uint32_t{0x5eed}};
  return std::mt19937_64(seq);
}

// Per-worker rollout state that survives across windows.
struct Worker {
  explicit Worker(env::ReacherEnv e, std::uint64_t seed, std::size_t index)
      : env(std::move(e)), rng(worker_rng(seed, index)) {}
  env::ReacherEnv env;
  std::mt19937_64 rng;
  env::Observation obs;
  net::NetworkState state;
  double episode_return = 0.0;
  bool need_reset = true;
};

struct Window {
  std::size_t steps = 0;
  std::vector<std::vector<double>> grads;
  std::vector<FinishedEpisode> finished;
};

void detach(net::NetworkState& s) {
  for (auto& c : s.columns) {
    if (c) {
      c->h = c->h.clone();
      c->c = c->c.clone();
    }
  }
}

// Rolls out up to t_max steps on `local` while recording, then backpropagates.
// `claim` reserves one environment step and returns the global step count, or 0 when the budget is spent.
template <class Claim>
Window run_window(net::ProgressiveNetwork& local, const std::vector<nn::Parameter*>& trainable, Worker& w,
                  const TrainConfig& config, Claim&& claim) {
  Window out;
  nn::Tape tape;
  std::vector<Tensor> logits, values;
  Trajectory traj;
  {
    nn::TapeScope scope(tape);
    detach(w.state);
    for (std::size_t t = 0; t < config.t_max; ++t) {
      const std::size_t global = claim();
      if (global == 0) break;
      if (w.need_reset) {
        w.obs = w.env.reset();
        w.state = local.initial_state(1);
        w.episode_return = 0.0;
        w.need_reset = false;
      }
      const auto fr = local.forward(to_batch(w.obs), w.state);
      PolicyOutput po;
      auto l = fr.logits.data();
      po.logits.assign(l.begin(), l.end());
      po.value = fr.value.item();
      auto action = sample_action(po, w.rng);
      auto res = w.env.step(action);
      logits.push_back(fr.logits);
      values.push_back(fr.value);
      traj.actions.push_back(std::move(action));
      traj.rewards.push_back(res.reward);
      traj.values.push_back(po.value);
      w.episode_return += res.reward;
      w.obs = std::move(res.observation);
      ++out.steps;
      if (res.terminated) {
        out.finished.push_back({w.episode_return, res.reason, global});
        w.need_reset = true;
        traj.terminal = true;
        break;
      }
    }
  }
  if (out.steps == 0) return out;

  if (!traj.terminal) {
    net::NetworkState peek = w.state;
    traj.bootstrap_value = policy(local, w.obs, peek).value;
  }
  const auto ra = compute_returns(traj, config.gamma);
  {
    nn::TapeScope scope(tape);
    const Tensor loss = a2c_loss(nn::concat_rows(logits), nn::concat_rows(values), traj.actions, ra.returns,
                                 ra.advantages, config.entropy_cost);
    if (!loss.all_finite()) throw nn::NumericalFault("non-finite actor-critic loss");
    tape.backward(loss);
  }
  out.grads.reserve(trainable.size());
  for (nn::Parameter* p : trainable) {
    if (p->value.has_grad()) {
      auto g = p->value.grad();
      for (double x : g) {
        if (!std::isfinite(x)) throw nn::NumericalFault("non-finite gradient in " + p->name);
      }
      out.grads.emplace_back(g.begin(), g.end());
      p->value.zero_grad();
    } else {
      out.grads.emplace_back(p->numel(), 0.0);
    }
  }
  return out;
}

std::vector<std::vector<double>> snapshot(const net::ProgressiveNetwork& net) {
  std::vector<std::vector<double>> out;
  for (const nn::Parameter* p : net.parameters()) {
    auto d = p->value.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

// Shared bookkeeping for finished episodes and best-weight tracking.
struct Recorder {
  explicit Recorder(const TrainConfig& c) : config(c) {}
  const TrainConfig& config;
  Clock::time_point start = Clock::now();
  TrainResult result;
  std::vector<double> recent;

  void record(const net::ProgressiveNetwork& net, const Window& win) {
    for (const auto& f : win.finished) {
      EpisodeRecord r;
      r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      r.env_steps = f.env_steps;
      r.episode_index = result.curve.episodes.size();
      r.episode_return = f.episode_return;
      r.reason = f.reason;
      result.curve.episodes.push_back(r);
      if (config.best_window == 0) continue;
      recent.push_back(f.episode_return);
      if (recent.size() > config.best_window) recent.erase(recent.begin());
      if (recent.size() == config.best_window) {
        const double m = median_of(recent);
        if (!result.best_values || m > result.best_score) {
          result.best_score = m;
          result.best_values = snapshot(net);
        }
      }
    }
  }
};

void copy_trainable(const std::vector<nn::Parameter*>& dst, const std::vector<nn::Parameter*>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto s = src[i]->value.data();
    std::copy(s.begin(), s.end(), dst[i]->value.mutable_data().begin());
  }
}

void check_config(const TrainConfig& config) {
  if (config.t_max < 1) throw ConfigError("t_max must be positive");
  if (config.workers < 1) throw ConfigError("worker count must be at least 1");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
}

}  // namespace

TrainResult train_a2c(net::ProgressiveNetwork& net, env::ReacherEnv& env, const TrainConfig& config) {
  check_config(config);
  check_compatible(net, env.config());
  const auto trainable = net.trainable_parameters();
  RmsProp opt(trainable, config.optimizer);
  Worker w(env, config.seed, 0);
  Recorder rec(config);
  std::size_t steps = 0;
  auto claim = [&]() -> std::size_t { return steps < config.total_steps ? ++steps : 0; };
  while (true) {
    Window win = run_window(net, trainable, w, config, claim);
    if (win.steps == 0) break;
    opt.apply(win.grads, config.learning_rate_at(steps), config.clip_norm);
    ++rec.result.updates;
    rec.record(net, win);
  }
  env = w.env;
  rec.result.curve.env_steps = steps;
  return std::move(rec.result);
}

TrainResult train_a3c(net::ProgressiveNetwork& net, const EnvFactory& make_env, const TrainConfig& config) {
  check_config(config);
  const auto trainable = net.trainable_parameters();
  RmsProp opt(trainable, config.optimizer);
  Recorder rec(config);
  std::mutex mu;
  std::atomic<std::size_t> steps{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;

  std::vector<Worker> workers;
  std::vector<net::ProgressiveNetwork> locals;
  workers.reserve(config.workers);
  locals.reserve(config.workers);
  for (std::size_t i = 0; i < config.workers; ++i) {
    workers.emplace_back(make_env(i), config.seed, i);
    check_compatible(net, workers.back().env.config());
    locals.push_back(net.clone());
  }

  auto claim = [&]() -> std::size_t {
    if (stop.load()) return 0;
    std::size_t cur = steps.load();
    while (cur < config.total_steps) {
      if (steps.compare_exchange_weak(cur, cur + 1)) return cur + 1;
    }
    return 0;
  };

  auto body = [&](std::size_t i) {
    try {
      auto& local = locals[i];
      const auto local_trainable = local.trainable_parameters();
      while (!stop.load()) {
        {
          std::lock_guard<std::mutex> lock(mu);
          copy_trainable(local_trainable, trainable);
        }
        Window win = run_window(local, local_trainable, workers[i], config, claim);
        if (win.steps == 0) break;
        std::lock_guard<std::mutex> lock(mu);
        opt.apply(win.grads, config.learning_rate_at(steps.load()), config.clip_norm);
        ++rec.result.updates;
        rec.record(net, win);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!error) error = std::current_exception();
      stop.store(true);
    }
  };

  if (config.workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < config.workers; ++i) threads.emplace_back(body, i);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
  rec.result.curve.env_steps = steps.load();
  return std::move(rec.result);
}

EvalReport evaluate(const net::ProgressiveNetwork& net, env::ReacherEnv& env, std::size_t episodes, std::uint64_t seed,
                    std::optional<std::size_t> output_column) {
  if (episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  check_compatible(net, env.config());
  EvalReport rep;
  rep.episodes = episodes;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = e == 0 ? env.reset(seed) : env.reset();
    auto state = net.initial_state(1);
    double ret = 0.0;
    while (env.alive()) {
      auto res = env.step(greedy_action(policy(net, obs, state, output_column)));
      ret += res.reward;
      obs = std::move(res.observation);
    }
    rep.returns.push_back(ret);
  }
  rep.mean_return = std::accumulate(rep.returns.begin(), rep.returns.end(), 0.0) / static_cast<double>(episodes);
  rep.median_return = median_of(rep.returns);
  rep.success_rate = static_cast<double>(std::count_if(rep.returns.begin(), rep.returns.end(),
                                                       [](double r) { return r > 0.0; })) /
                     static_cast<double>(episodes);
  return rep;
}

}  // namespace prognet::rl
