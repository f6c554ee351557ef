#include "prognet/nn/tape.hpp"

#include <algorithm>

namespace prognet::nn {

namespace {
thread_local Tape* current_tape = nullptr;
}

Tape* Tape::active() { return current_tape; }

void Tape::record(std::shared_ptr<detail::TensorImpl> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw UsageError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;  // nothing trainable reached the loss

  for (auto& node : nodes_) std::fill(node->grad.begin(), node->grad.end(), 0.0);

  const auto& root = loss.impl();
  if (root->is_leaf) {
    root->ensure_grad()[0] += 1.0;
    return;
  }
  root->ensure_grad()[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward_fn) continue;
    node.backward_fn(node);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(current_tape) { current_tape = nullptr; }
NoGradScope::~NoGradScope() { current_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw UsageError("backward called with no active tape");
  tape->backward(loss);
}

}  // namespace prognet::nn
