#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "prognet/nn/tensor.hpp"

namespace prognet::nn {

enum class LayerKind { conv, linear, lstm, relu, softmax_group };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// Size description of one layer of a column.
struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  std::size_t units = 0;   // output channels (conv) or units (linear/lstm)
  std::size_t kernel = 0;  // conv only
  std::size_t stride = 0;  // conv only
  std::size_t group = 0;   // softmax_group only

  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride) {
    return {LayerKind::conv, channels, kernel, stride, 0};
  }
  static LayerSpec linear(std::size_t units) { return {LayerKind::linear, units, 0, 0, 0}; }
  static LayerSpec lstm(std::size_t units) { return {LayerKind::lstm, units, 0, 0, 0}; }

  /// Throws std::invalid_argument when sizes are out of range for the kind.
  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

using Rng = std::mt19937_64;

/// Uniform in +-1/sqrt(fan_in), the default for every weight.
Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng);

struct LstmState {
  Tensor h;
  Tensor c;
};

/// Zero (h, c) for `batch` rows of `units`.
LstmState lstm_zero_state(std::size_t batch, std::size_t units);

/// One step of a standard LSTM cell (no peepholes).
///
/// Gate pre-activations are x W_in^T + h W_hid^T + b, split as
/// [input, forget, candidate, output] blocks of `units` columns each.
/// Returns the new state; the cell output equals the new h.
LstmState lstm_step(const Tensor& x, const LstmState& state, const Tensor& w_input, const Tensor& w_hidden,
                    const Tensor& bias);

}  // namespace prognet::nn
