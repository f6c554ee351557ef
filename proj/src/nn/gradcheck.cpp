#include "prognet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "prognet/nn/tape.hpp"

namespace prognet::nn {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradScope no_grad;
  Tensor loss = loss_fn();
  if (loss.numel() != 1) throw UsageError("finite_diff_check: loss must be scalar");
  return loss.item();
}

std::vector<bool> pattern(const std::function<std::vector<bool>()>& fn) {
  NoGradScope no_grad;
  return fn();
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Parameter* const> params,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("finite_diff_check: epsilon must be > 0");

  const double base = evaluate(loss_fn);
  if (evaluate(loss_fn) != base) throw UnreliableOracle("loss function is not deterministic");

  for (Parameter* p : params) p->value.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  GradCheckReport report;
  struct Coord {
    Parameter* param;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (Parameter* p : params) {
    if (p->frozen) {
      for (double g : p->value.grad()) report.frozen_max_abs_grad = std::max(report.frozen_max_abs_grad, std::abs(g));
      report.frozen_coordinates += p->numel();
      continue;
    }
    for (std::size_t i = 0; i < p->numel(); ++i) coords.push_back({p, i});
  }
  if (coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  const double eps = options.epsilon;
  for (const auto& [param, index] : coords) {
    auto values = param->value.mutable_data();
    const double saved = values[index];
    values[index] = saved + eps;
    const double up = evaluate(loss_fn);
    std::vector<bool> pattern_up;
    if (options.activation_pattern) pattern_up = pattern(options.activation_pattern);
    values[index] = saved - eps;
    const double down = evaluate(loss_fn);
    const bool kink = options.activation_pattern && pattern(options.activation_pattern) != pattern_up;
    values[index] = saved;
    if (kink) {
      ++report.kinks_skipped;
      continue;
    }

    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = param->value.has_grad() ? param->value.grad()[index] : 0.0;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic - numeric) / denom);
    ++report.coordinates_checked;
  }
  return report;
}

}  // namespace prognet::nn
