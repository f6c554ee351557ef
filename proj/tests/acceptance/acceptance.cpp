// Acceptance suite: one PASS/FAIL line per criterion.
//
//   prognet_acceptance --tier fast           criteria 1-5, 10, 11 (seconds to minutes)
//   prognet_acceptance --tier nightly        criteria 6-9 (hours on one core)
//   prognet_acceptance --tier all --only 7   a subset
//
// Nightly runs live under --work and are resumed when rerun.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "../support/fixtures.hpp"
#include "prognet/exp/experiment.hpp"
#include "prognet/exp/stats.hpp"
#include "prognet/nn/checkpoint.hpp"
#include "prognet/nn/gradcheck.hpp"
#include "prognet/nn/ops.hpp"
#include "prognet/rl/a2c.hpp"

namespace {

using namespace prognet;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
};

struct Context {
  fs::path work;
  std::optional<fs::path> source;
  bool verbose = false;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<double>> values_of(const net::ProgressiveNetwork& n, std::optional<std::size_t> column = {}) {
  std::vector<std::vector<double>> out;
  for (const auto* p : n.parameters()) {
    if (column && p->name.rfind("col" + std::to_string(*column) + "/", 0) != 0) continue;
    out.emplace_back(p->value.data().begin(), p->value.data().end());
  }
  return out;
}

void log(const Context& ctx, const std::string& msg) {
  if (ctx.verbose) std::cerr << "  .. " << msg << std::endl;
}

// ---------------------------------------------------------------------------
// 1. Initial-policy identity

std::vector<double> probabilities(const rl::PolicyOutput& p) {
  std::vector<double> out;
  for (std::size_t j = 0; j < p.joints(); ++j) {
    const double m = std::max({p.logits[3 * j], p.logits[3 * j + 1], p.logits[3 * j + 2]});
    double z = 0.0;
    for (int a = 0; a < 3; ++a) z += std::exp(p.logits[3 * j + a] - m);
    for (int a = 0; a < 3; ++a) out.push_back(std::exp(p.logits[3 * j + a] - m) / z);
  }
  out.push_back(p.value);
  return out;
}

Outcome initial_policy_identity(Context&) {
  std::mt19937_64 rng(101);
  double gap = 0.0;
  std::size_t compared = 0;
  struct Pair {
    net::ColumnSpec source, target;
    std::size_t proprio;
  };
  auto adapter_ff = net::narrow_feedforward(2);
  adapter_ff.lateral_mode = net::LateralMode::adapter;
  const std::vector<Pair> pairs{
      {net::wide_feedforward(2), adapter_ff, 0},
      {net::wide_recurrent(2), net::narrow_recurrent(2), 0},
      {net::wide_feedforward(2), net::with_proprio(net::narrow_recurrent(2), 16), 4},
  };
  for (const auto& pr : pairs) {
    net::ProgressiveNetwork n(fixtures::input(32, pr.proprio));
    n.add_column(pr.source, 11);
    n.add_column(pr.target, 12, 0);
    auto s0 = n.initial_state(1), s1 = n.initial_state(1);
    for (int t = 0; t < 100; ++t) {
      const auto obs = fixtures::random_obs(n.input(), 1, rng);
      env::Observation o;
      o.rgb = nn::reshape(obs.rgb, {3, 32, 32});
      if (pr.proprio) o.proprio = nn::reshape(obs.proprio, {pr.proprio});
      const auto a = probabilities(rl::policy(n, o, s0, 0));
      const auto b = probabilities(rl::policy(n, o, s1, 1));
      for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
      ++compared;
    }
  }
  Outcome out;
  out.pass = gap <= 1e-12;
  out.detail = "max |p_new - p_src| and |v_new - v_src| = " + fmt(gap) + " over " + std::to_string(compared) +
               " observations (3 column pairs, recurrent state carried)";
  out.data = {{"max_gap", gap}, {"observations", compared}};
  return out;
}

// ---------------------------------------------------------------------------
// 2. No forgetting

Outcome no_forgetting(Context&) {
  env::EnvConfig e;
  e.image_size = 32;
  e.seed = 900;
  e.perturbation = env::PerturbationKind::color;
  e.perturbation_level = 1.0;
  net::ProgressiveNetwork n(fixtures::input(32));
  n.add_column(net::wide_feedforward(2), 21);
  auto spec = net::narrow_feedforward(2);
  spec.lateral_mode = net::LateralMode::adapter;
  n.add_column(spec, 22, 0);

  std::mt19937_64 rng(202);
  const auto probe = fixtures::random_obs(n.input(), 32, rng);
  auto column_outputs = [&] {
    auto s = n.initial_state(32);
    const auto r = n.forward(probe, s, 0);
    return std::vector<double>(r.heads.data().begin(), r.heads.data().end());
  };
  const auto params_before = values_of(n, 0);
  const auto out_before = column_outputs();
  const auto new_before = values_of(n, 1);

  env::ReacherEnv env(e);
  rl::TrainConfig tc;
  tc.total_steps = 10000;
  tc.seed = 3;
  const auto result = rl::train_a2c(n, env, tc);

  const bool params_same = values_of(n, 0) == params_before;
  const bool outputs_same = column_outputs() == out_before;
  const bool trained = values_of(n, 1) != new_before;
  Outcome out;
  out.pass = params_same && outputs_same && trained && result.curve.env_steps == 10000;
  out.detail = std::string("column-1 params ") + (params_same ? "bit-identical" : "CHANGED") + ", outputs " +
               (outputs_same ? "bit-identical" : "CHANGED") + " after " + std::to_string(result.curve.env_steps) +
               " steps; new column " + (trained ? "updated" : "NOT updated");
  return out;
}

// ---------------------------------------------------------------------------
// 3. Dense-oracle equivalence

Outcome oracle_equivalence(Context&) {
  std::mt19937_64 rng(303);
  double gap = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const bool recurrent = draw % 2 == 1;
    const bool proprio = draw % 4 >= 2;
    net::ProgressiveNetwork n(fixtures::input(7, proprio ? 2 : 0));
    auto first = fixtures::tiny_vision(1, 4, 3, 4, recurrent ? 4 : 0);
    auto second = fixtures::tiny_vision(1, 2, 4, 3, recurrent ? 2 : 0);
    if (proprio) second = net::with_proprio(second, 3);
    n.add_column(first, 1000 + draw);
    n.add_column(second, 2000 + draw);
    fixtures::randomize(n, rng);
    gap = std::max(gap, fixtures::max_oracle_gap(n, rng, recurrent ? 3 : 1));
  }
  Outcome out;
  out.pass = gap <= 1e-12;
  out.detail = "max |heads - dense oracle| = " + fmt(gap) + " over 100 parameter draws (<=4-unit layers)";
  out.data = {{"max_gap", gap}};
  return out;
}

// ---------------------------------------------------------------------------
// 4. Gradient correctness

Outcome gradient_check(Context&) {
  net::ProgressiveNetwork n(fixtures::input(32));
  n.add_column(net::narrow_recurrent(2), 5);
  env::EnvConfig ec;
  ec.image_size = 32;
  ec.seed = 4;
  env::ReacherEnv e(ec);
  std::mt19937_64 rng(6);
  std::vector<nn::Tensor> frames;
  std::vector<std::vector<int>> actions;
  e.reset();
  for (int t = 0; t < 5; ++t) {
    frames.push_back(rl::to_batch(e.observe()).rgb);
    actions.push_back({static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)});
    if (e.alive()) e.step(actions.back());
  }
  net::ObservationBatch seq;
  seq.rgb = nn::concat_rows(frames);
  const std::vector<double> returns{1.2, 0.4, -0.3, 0.9, 0.1}, advantages{0.5, -0.7, 0.2, 1.1, -0.4};
  const std::vector<bool> starts{true, false, false, false, false};

  nn::GradCheckOptions options{1e-3, 1u << 30, 0, {}};
  options.activation_pattern = [&] {
    auto s = n.initial_state(1);
    return net::activation_pattern(n.forward_sequence(seq, s, starts));
  };
  auto params = n.parameters();
  const auto report = nn::finite_diff_check(
      [&] {
        auto s = n.initial_state(1);
        auto r = n.forward_sequence(seq, s, starts);
        return rl::a2c_loss(r.logits, r.value, actions, returns, advantages, 0.01);
      },
      params, options);
  const std::size_t total = report.coordinates_checked + report.kinks_skipped;
  Outcome out;
  out.pass = report.max_relative_error <= 1e-4 && report.kinks_skipped * 10 < total;
  out.detail = "max relative error " + fmt(report.max_relative_error) + " over " +
               std::to_string(report.coordinates_checked) + " coordinates (eps 1e-3; " +
               std::to_string(report.kinks_skipped) + " straddling a ReLU kink skipped)";
  out.data = {{"max_relative_error", report.max_relative_error},
              {"coordinates", report.coordinates_checked},
              {"kinks_skipped", report.kinks_skipped}};
  return out;
}

// ---------------------------------------------------------------------------
// 5. Preset parameter counts

Outcome parameter_counts(Context&) {
  const auto in = fixtures::input(64);
  auto own = [&](const net::ColumnSpec& s) {
    net::ProgressiveNetwork n(in);
    n.add_column(s, 1);
    return n.param_count(true);
  };
  auto with_laterals = [&](const net::ColumnSpec& source, net::ColumnSpec s, net::LateralMode mode) {
    s.lateral_mode = mode;
    net::ProgressiveNetwork n(in);
    n.add_column(source, 1);
    const std::size_t base = n.param_count(true);
    n.add_column(s, 2);
    return n.param_count(true) - base;
  };
  const std::vector<std::tuple<std::string, std::size_t, double>> rows{
      {"wide feedforward", own(net::wide_feedforward(9)), 621e3},
      {"narrow recurrent (+laterals)",
       with_laterals(net::wide_recurrent(9), net::narrow_recurrent(9), net::LateralMode::linear), 37e3},
      {"wide recurrent", own(net::wide_recurrent(9)), 299e3},
      {"narrow feedforward (+adapter laterals)",
       with_laterals(net::wide_feedforward(9), net::narrow_feedforward(9), net::LateralMode::adapter), 39e3},
  };
  Outcome out;
  out.pass = true;
  std::ostringstream d;
  for (const auto& [name, count, ref] : rows) {
    const double dev = count / ref - 1.0;
    out.pass &= std::abs(dev) <= 0.05;
    d << name << " " << count << " (" << (dev >= 0 ? "+" : "") << fmt(100.0 * dev, 2) << "%); ";
    out.data[name] = count;
  }
  out.detail = d.str();
  out.detail.resize(out.detail.size() - 2);
  return out;
}

// ---------------------------------------------------------------------------
// 10. Determinism and serialization

Outcome determinism(Context& ctx) {
  const fs::path root = ctx.work / "determinism";
  fs::remove_all(root);
  exp::ExperimentConfig c;
  c.kind = exp::ExperimentKind::train_sim;
  c.seed = 10;
  c.source_env.image_size = 32;
  c.source_env.seed = 100;
  c.target_env = c.source_env;
  c.column = net::narrow_recurrent(2);
  c.train.total_steps = 5000;
  c.eval_episodes = 5;
  c.out_dir = root / "a";
  exp::run_train_sim(c);
  c.out_dir = root / "b";
  exp::run_train_sim(c);
  const bool curves = slurp(root / "a" / "curve.csv") == slurp(root / "b" / "curve.csv");
  const bool ckpts = slurp(root / "a" / "checkpoint.bin") == slurp(root / "b" / "checkpoint.bin") &&
                     slurp(root / "a" / "final.bin") == slurp(root / "b" / "final.bin");

  // Checkpoint round trip: load into a fresh network, re-save, compare bytes and values.
  const auto loaded = exp::load_run_network(root / "a", std::nullopt, "final.bin");
  const auto params = loaded.parameters();
  const auto bytes = nn::Checkpoint::from_parameters(params, loaded.architecture_hash()).serialize();
  const std::string file = slurp(root / "a" / "final.bin");
  const bool roundtrip = std::string(bytes.begin(), bytes.end()) == file;

  // Single-worker A3C against A2C.
  env::EnvConfig e = c.source_env;
  e.seed = 77;
  net::ProgressiveNetwork base(fixtures::input(32));
  base.add_column(net::narrow_feedforward(2), 5);
  auto n1 = base.clone(), n2 = base.clone();
  rl::TrainConfig tc;
  tc.total_steps = 3000;
  tc.seed = 9;
  env::ReacherEnv env(e);
  const auto r1 = rl::train_a2c(n1, env, tc);
  const auto r2 = rl::train_a3c(n2, [&](std::size_t) { return env::ReacherEnv(e); }, tc);
  std::ostringstream c1, c2;
  r1.curve.write_csv(c1, true);
  r2.curve.write_csv(c2, true);
  const bool a3c = c1.str() == c2.str() && values_of(n1) == values_of(n2);

  Outcome out;
  out.pass = curves && ckpts && roundtrip && a3c;
  auto yes = [](bool b) { return b ? "identical" : "DIFFERENT"; };
  out.detail = std::string("repeat run curve.csv ") + yes(curves) + ", checkpoints " + yes(ckpts) +
               "; checkpoint reload+resave " + yes(roundtrip) + "; A3C(1 worker) vs A2C curve+params " + yes(a3c);
  return out;
}

// ---------------------------------------------------------------------------
// 11. Environment correctness

Outcome environment(Context&) {
  std::size_t mismatches = 0, hits = 0, outside = 0, longest = 0, bad_timeouts = 0;
  {
    env::EnvConfig c;
    c.image_size = 32;
    c.seed = 9;
    env::ReacherEnv e(c);
    const auto& rc = e.config();
    std::mt19937_64 rng(1101);
    for (int trial = 0; trial < 1000; ++trial) {
      e.reset();
      env::ArmState s = e.state();
      for (std::size_t i = 0; i < rc.joints; ++i) {
        s.joint_angles[i] = std::uniform_real_distribution<double>(-rc.joint_limits[i], rc.joint_limits[i])(rng);
      }
      const auto tip = fixtures::fk_oracle(s.joint_angles, rc.link_lengths);
      const double r = std::uniform_real_distribution<double>(0.0, 2.0 * rc.reach_threshold)(rng);
      const double a = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      s.target = {tip.x + r * std::cos(a), tip.y + r * std::sin(a)};
      e.set_state(s);
      const auto res = e.step(std::vector<int>(rc.joints, env::zero));
      const bool in_reach = std::hypot(tip.x - s.target.x, tip.y - s.target.y) <= rc.reach_threshold;
      mismatches += res.reward != (in_reach ? 1.0 : 0.0);
      hits += in_reach;
    }
  }
  {
    env::EnvConfig c;
    c.image_size = 32;
    c.seed = 19;
    c.conveyor.enabled = true;
    env::ReacherEnv e(c);
    const auto& rc = e.config();
    const double xlo = rc.target_center.x - rc.target_width / 2, xhi = rc.target_center.x + rc.target_width / 2;
    const double ylo = rc.target_center.y - rc.target_height / 2, yhi = rc.target_center.y + rc.target_height / 2;
    std::mt19937_64 rng(1102);
    std::uniform_int_distribution<int> act(0, 2);
    e.reset();
    for (int t = 0; t < 10000; ++t) {
      if (!e.alive()) e.reset();
      e.step(std::vector<int>{act(rng), act(rng)});
      const auto p = e.state().target;
      outside += p.x < xlo || p.x > xhi || p.y < ylo || p.y > yhi;
    }
  }
  {
    env::ReacherEnv e(env::EnvConfig{});
    std::mt19937_64 rng(1103);
    std::uniform_int_distribution<int> act(0, 2);
    for (int ep = 0; ep < 300; ++ep) {
      e.reset();
      std::size_t steps = 0;
      env::StepResult last;
      // Half the episodes hold still so that they run into the timeout.
      const bool still = ep % 2 == 0;
      while (e.alive()) {
        last = e.step(still ? std::vector<int>{env::zero, env::zero} : std::vector<int>{act(rng), act(rng)});
        ++steps;
      }
      longest = std::max(longest, steps);
      if (last.reason == env::TerminationReason::timeout && steps != 50) ++bad_timeouts;
    }
  }
  Outcome out;
  out.pass = mismatches == 0 && outside == 0 && longest <= 50 && bad_timeouts == 0 && hits > 0;
  out.detail = "reward/FK mismatches " + std::to_string(mismatches) + "/1000 (" + std::to_string(hits) +
               " in reach); conveyor exits " + std::to_string(outside) + "/10000 steps; longest episode " +
               std::to_string(longest) + " steps";
  return out;
}

// ---------------------------------------------------------------------------
// Nightly helpers

constexpr std::size_t kSimSteps = 300000;
constexpr std::size_t kSourceSteps = 1000000;
constexpr std::size_t kTransferSteps = 60000;
constexpr std::uint64_t kSimEnvSeed = 100;
constexpr std::uint64_t kTargetEnvSeed = 900;

env::EnvConfig sim_env() {
  env::EnvConfig e;
  e.image_size = 32;
  e.seed = kSimEnvSeed;
  return e;
}

env::EnvConfig target_env(env::PerturbationKind kind, double level) {
  env::EnvConfig e = sim_env();
  e.seed = kTargetEnvSeed;
  e.target_hold_episodes = 3;
  e.perturbation = kind;
  e.perturbation_level = level;
  return e;
}

exp::ExperimentConfig sim_config(const net::ColumnSpec& column, std::uint64_t seed, std::size_t steps, const fs::path& dir) {
  exp::ExperimentConfig c;
  c.kind = exp::ExperimentKind::train_sim;
  c.seed = seed;
  c.out_dir = dir;
  c.source_env = sim_env();
  c.target_env = c.source_env;
  c.column = column;
  c.train.total_steps = steps;
  c.resume = true;
  return c;
}

double max_achievable(const env::EnvConfig& e) { return env::expert_return(e, 200, 5); }

// Wide feedforward column trained on the clean simulator; reused by criteria 7-9.
fs::path source_run(Context& ctx) {
  if (ctx.source) return *ctx.source;
  const fs::path dir = ctx.work / "source";
  log(ctx, "training source column in " + dir.string());
  auto c = sim_config(net::wide_feedforward(2), 1, kSourceSteps, dir);
  c.train.learning_rate = 1e-3;
  exp::run_train_sim(c);
  ctx.source = dir;
  return dir;
}

net::ColumnSpec progressive_column() {
  auto s = net::narrow_feedforward(2);
  s.lateral_mode = net::LateralMode::adapter;
  return s;
}

exp::ExperimentConfig transfer_config(const fs::path& source, const env::EnvConfig& target, exp::TransferMode mode,
                                      std::uint64_t seed, const fs::path& dir) {
  exp::ExperimentConfig c = sim_config(progressive_column(), seed, kTransferSteps, dir);
  c.kind = mode == exp::TransferMode::progressive ? exp::ExperimentKind::transfer_progressive
           : mode == exp::TransferMode::finetune  ? exp::ExperimentKind::transfer_finetune
                                                  : exp::ExperimentKind::train_scratch;
  if (mode == exp::TransferMode::scratch) c.column = net::wide_feedforward(2);
  c.source_run = source;
  c.target_env = target;
  return c;
}

std::string summary(std::span<const double> v) {
  return "median " + fmt(exp::median(v)) + " IQR " + fmt(exp::interquartile_range(v));
}

// ---------------------------------------------------------------------------
// 6. Capacity and recurrence

Outcome capacity_and_recurrence(Context& ctx) {
  const std::vector<std::pair<std::string, net::ColumnSpec>> arms{{"wide-feedforward", net::wide_feedforward(2)},
                                                                   {"narrow-feedforward", net::narrow_feedforward(2)},
                                                                   {"wide-recurrent", net::wide_recurrent(2)},
                                                                   {"narrow-recurrent", net::narrow_recurrent(2)}};
  std::map<std::string, std::vector<double>> finals;
  for (const auto& [name, spec] : arms) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const fs::path dir = ctx.work / "capacity" / (name + "_s" + std::to_string(seed));
      log(ctx, "train " + dir.string());
      finals[name].push_back(exp::run_train_sim(sim_config(spec, seed, kSimSteps, dir)).record.final_median_return);
    }
  }
  auto join = [&](const std::string& a, const std::string& b) {
    auto v = finals[a];
    v.insert(v.end(), finals[b].begin(), finals[b].end());
    return v;
  };
  const auto wide = join("wide-feedforward", "wide-recurrent"), narrow = join("narrow-feedforward", "narrow-recurrent");
  const auto rec = join("wide-recurrent", "narrow-recurrent"), ff = join("wide-feedforward", "narrow-feedforward");
  const auto p_wide = exp::mann_whitney_greater(wide, narrow).p_value;
  const auto p_rec = exp::mann_whitney_greater(rec, ff).p_value;
  Outcome out;
  out.pass = p_wide < 0.05 && p_rec < 0.05;
  std::ostringstream d;
  d << "wide>narrow p=" << fmt(p_wide) << ", recurrent>feedforward p=" << fmt(p_rec) << " (final medians:";
  for (const auto& [name, spec] : arms) d << " " << name << " " << summary(finals[name]) << ";";
  d << " expert " << fmt(max_achievable(sim_env())) << ")";
  out.detail = d.str();
  out.data = {{"finals", finals}, {"p_wide_gt_narrow", p_wide}, {"p_recurrent_gt_feedforward", p_rec}};
  return out;
}

// ---------------------------------------------------------------------------
// 7. Transfer to a strongly perturbed target

constexpr env::PerturbationKind kStrongKind = env::PerturbationKind::perspective;
constexpr double kStrongLevel = 0.3;

Outcome strong_transfer(Context& ctx) {
  const fs::path src = source_run(ctx);
  const env::EnvConfig target = target_env(kStrongKind, kStrongLevel);
  const double best = max_achievable(target);
  std::map<std::string, std::vector<double>> finals;
  for (auto mode : {exp::TransferMode::scratch, exp::TransferMode::finetune, exp::TransferMode::progressive}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const fs::path dir = ctx.work / "strong" / (exp::to_string(mode) + "_s" + std::to_string(seed));
      log(ctx, "transfer " + dir.string());
      const auto r = exp::run_transfer(transfer_config(src, target, mode, seed, dir), mode);
      finals[exp::to_string(mode)].push_back(r.record.final_median_return);
    }
  }
  const double scratch = exp::median(finals["scratch"]), finetune = exp::median(finals["finetune"]),
               progressive = exp::median(finals["progressive"]);
  Outcome out;
  out.pass = scratch <= 0.05 * best && progressive >= 0.5 * best && progressive >= finetune;
  out.detail = "max achievable " + fmt(best) + "; median final: scratch " + fmt(scratch) + " (" +
               fmt(100 * scratch / best, 2) + "%, need <=5%), progressive " + fmt(progressive) + " (" +
               fmt(100 * progressive / best, 2) + "%, need >=50%), finetune " + fmt(finetune);
  out.data = {{"finals", finals}, {"max_achievable", best}};
  return out;
}

// ---------------------------------------------------------------------------
// 8. Hyperparameter robustness

Outcome sweep_stability(Context& ctx) {
  const fs::path src = source_run(ctx);
  struct Condition {
    std::string name;
    env::PerturbationKind kind;
    double level;
  };
  const std::vector<Condition> conditions{{"color-small", env::PerturbationKind::color, 0.3},
                                          {"color-large", env::PerturbationKind::color, 1.0},
                                          {"perspective-small", env::PerturbationKind::perspective, 0.3},
                                          {"perspective-large", env::PerturbationKind::perspective, 1.0}};
  std::size_t wins = 0;
  std::ostringstream d;
  Outcome out;
  for (const auto& cond : conditions) {
    std::map<std::string, exp::SweepOutput> res;
    for (auto mode : {exp::TransferMode::progressive, exp::TransferMode::finetune}) {
      exp::ExperimentConfig c = transfer_config(src, target_env(cond.kind, cond.level), mode, 8, {});
      c.sweep.mode = c.kind;
      c.kind = exp::ExperimentKind::sweep;
      c.sweep.samples = 30;
      c.out_dir = ctx.work / "sweep" / (cond.name + "_" + exp::to_string(mode));
      log(ctx, "sweep " + c.out_dir.string());
      res[exp::to_string(mode)] = exp::run_sweep(c);
    }
    const auto& p = res["progressive"];
    const auto& f = res["finetune"];
    const bool win = p.iqr_final < f.iqr_final && p.median_final >= f.median_final;
    wins += win;
    d << cond.name << (win ? " ok" : " no") << " (prog median " << fmt(p.median_final) << " IQR " << fmt(p.iqr_final)
      << " / ft median " << fmt(f.median_final) << " IQR " << fmt(f.iqr_final) << "); ";
    out.data[cond.name] = {{"progressive", {{"median", p.median_final}, {"iqr", p.iqr_final}}},
                           {"finetune", {{"median", f.median_final}, {"iqr", f.iqr_final}}}};
  }
  out.pass = wins >= 3;
  out.detail = std::to_string(wins) + "/4 conditions: " + d.str();
  out.detail.resize(out.detail.size() - 2);
  return out;
}

// ---------------------------------------------------------------------------
// 9. Conveyor curriculum on the perturbed target domain

Outcome conveyor_curriculum(Context& ctx) {
  const fs::path src = source_run(ctx);
  std::vector<double> direct, third, ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    exp::ExperimentConfig c = sim_config(progressive_column(), seed, kTransferSteps, ctx.work / "conveyor" / ("s" + std::to_string(seed)));
    c.kind = exp::ExperimentKind::conveyor_3col;
    c.source_run = src;
    c.target_env = target_env(kStrongKind, kStrongLevel);
    c.target_env.proprio = true;
    c.target_env.conveyor.enabled = true;
    c.conveyor.second = net::with_proprio(progressive_column(), 16);
    c.conveyor.third = net::proprio_only(2, 32, 32, 0);
    c.conveyor.static_steps = kTransferSteps;
    log(ctx, "conveyor " + c.out_dir.string());
    const auto r = exp::run_conveyor_3col(c);
    direct.push_back(static_cast<double>(r.direct_steps_to_80));
    third.push_back(static_cast<double>(r.curriculum_steps_to_80));
    ratios.push_back(third.back() / std::max(1.0, direct.back()));
  }
  const double md = exp::median(direct), mt = exp::median(third);
  Outcome out;
  out.pass = mt <= 0.25 * md;
  out.detail = "median steps to 80% of final: third column " + fmt(mt, 6) + ", direct second column " + fmt(md, 6) +
               " (ratio " + fmt(mt / std::max(1.0, md)) + ", need <=0.25)";
  out.data = {{"direct_steps_to_80", direct}, {"third_steps_to_80", third}, {"ratios", ratios}};
  return out;
}

struct Criterion {
  int id;
  std::string name;
  bool nightly;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prognet acceptance suite"};
  std::string tier = "fast";
  std::string work = "acceptance_work";
  std::vector<int> only;
  std::optional<std::string> source;
  bool verbose = false;
  app.add_option("--tier", tier, "fast | nightly | all")->check(CLI::IsMember({"fast", "nightly", "all"}));
  app.add_option("--work", work, "Directory for runs and results.json");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--source", source, "Existing source run directory for criteria 7-9");
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = work;
  ctx.verbose = verbose;
  if (source) ctx.source = *source;
  fs::create_directories(ctx.work);

  const std::vector<Criterion> criteria{
      {1, "initial-policy identity", false, initial_policy_identity},
      {2, "no forgetting", false, no_forgetting},
      {3, "dense oracle equivalence", false, oracle_equivalence},
      {4, "gradient correctness", false, gradient_check},
      {5, "parameter counts", false, parameter_counts},
      {6, "wide/narrow, recurrent/feedforward", true, capacity_and_recurrence},
      {7, "strong perturbation transfer", true, strong_transfer},
      {8, "hyperparameter stability", true, sweep_stability},
      {9, "conveyor curriculum", true, conveyor_curriculum},
      {10, "determinism & serialization", false, determinism},
      {11, "environment correctness", false, environment},
  };

  nlohmann::json results = nlohmann::json::object();
  const fs::path results_path = ctx.work / "results.json";
  if (fs::exists(results_path)) {
    std::ifstream is(results_path);
    results = nlohmann::json::parse(is, nullptr, false);
    if (results.is_discarded()) results = nlohmann::json::object();
  }

  int failures = 0;
  for (const auto& c : criteria) {
    const bool selected = only.empty() ? (tier == "all" || (tier == "nightly") == c.nightly)
                                       : std::find(only.begin(), only.end(), c.id) != only.end();
    std::ostringstream line;
    line << "criterion " << std::setw(2) << c.id << " [" << c.name << "]: ";
    if (!selected) {
      if (only.empty())
        line << "NOT RUN (" << (c.nightly ? "nightly" : "fast") << " tier)";
      else
        line << "NOT RUN (not in --only)";
      std::cout << line.str() << std::endl;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    line << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << " [" << fmt(secs, 3) << " s]";
    std::cout << line.str() << std::endl;
    results[std::to_string(c.id)] = {{"name", c.name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", secs},
                                     {"data", o.data}};
    std::ofstream os(results_path);
    os << results.dump(2) << '\n';
  }
  return failures == 0 ? 0 : 1;
}
