#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>
#include <stdexcept>

#include "prognet/nn/tensor.hpp"

namespace prognet::nn {

/// f() is not reproducible, so finite differences would be meaningless.
class UnreliableOracle : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Upper bound on checked coordinates; all coordinates when the total is smaller.
  std::size_t max_coordinates = 2000;
  std::uint64_t seed = 0;
  /// On/off pattern of every piecewise-linear unit at the current parameter values.
  /// When set, coordinates whose +-epsilon evaluations see different patterns
  /// straddle a kink and are skipped.
  std::function<std::vector<bool>()> activation_pattern;
};

struct GradCheckReport {
  /// max over checked coordinates of |a - n| / max(|a|, |n|, 1e-8).
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t kinks_skipped = 0;
  /// Frozen parameters must report exactly zero analytic gradient.
  double frozen_max_abs_grad = 0.0;
  std::size_t frozen_coordinates = 0;
};

/// Compares analytic gradients of `loss_fn` against central differences.
///
/// `loss_fn` must rebuild the scalar loss from the current parameter values
/// each time it is called. Existing parameter gradients are cleared.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Parameter* const> params,
                                  const GradCheckOptions& options = {});

}  // namespace prognet::nn
