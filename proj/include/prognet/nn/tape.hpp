#pragma once

#include <memory>
#include <vector>

#include "prognet/nn/tensor.hpp"

namespace prognet::nn {

/// Records differentiable operations in creation order.
///
/// A tape becomes the recording target for the calling thread while a
/// TapeScope for it is alive. Operations evaluated with no active tape (or
/// whose inputs need no gradient) are computed but not recorded, which is
/// the inference mode used for rollouts and frozen columns.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<detail::TensorImpl> node);

  /// Propagates d(loss)/d(.) to every reachable leaf that requires a gradient.
  /// Leaf gradients accumulate across calls; intermediate gradients do not.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Tape recording on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
};

/// RAII activation of a tape on the current thread. Scopes nest.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backward through the tape active on this thread.
void backward(const Tensor& loss);

}  // namespace prognet::nn
