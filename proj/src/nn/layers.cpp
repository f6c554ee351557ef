#include "prognet/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "prognet/nn/ops.hpp"

namespace prognet::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::linear: return "linear";
    case LayerKind::lstm: return "lstm";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax_group: return "softmax-group";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "linear") return LayerKind::linear;
  if (s == "lstm") return LayerKind::lstm;
  if (s == "relu") return LayerKind::relu;
  if (s == "softmax-group") return LayerKind::softmax_group;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::conv:
      if (units < 1 || kernel < 1 || stride < 1) {
        throw std::invalid_argument("conv layer needs channels, kernel and stride >= 1");
      }
      break;
    case LayerKind::linear:
    case LayerKind::lstm:
      if (units < 1) throw std::invalid_argument(to_string(kind) + " layer needs units >= 1");
      break;
    case LayerKind::softmax_group:
      if (group < 1) throw std::invalid_argument("softmax-group needs group >= 1");
      break;
    case LayerKind::relu: break;
  }
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

LstmState lstm_zero_state(std::size_t batch, std::size_t units) {
  return {Tensor::zeros({batch, units}), Tensor::zeros({batch, units})};
}

LstmState lstm_step(const Tensor& x, const LstmState& state, const Tensor& w_input, const Tensor& w_hidden,
                    const Tensor& bias) {
  const std::size_t units = w_hidden.dim() == 2 ? w_hidden.size(1) : 0;
  if (w_hidden.dim() != 2 || w_hidden.size(0) != 4 * units) {
    throw DimensionError("lstm: hidden weight must be [4n, n], got " + to_string(w_hidden.shape()));
  }
  if (w_input.dim() != 2 || w_input.size(0) != 4 * units) {
    throw DimensionError("lstm: input weight " + to_string(w_input.shape()) + " incompatible with hidden weight " +
                         to_string(w_hidden.shape()));
  }
  if (state.h.shape() != Shape{x.size(0), units} || state.c.shape() != state.h.shape()) {
    throw DimensionError("lstm: state " + to_string(state.h.shape()) + "/" + to_string(state.c.shape()) +
                         " does not match batch " + std::to_string(x.size(0)) + " x units " + std::to_string(units));
  }
  Tensor gates = add(linear(x, w_input, bias), linear(state.h, w_hidden, Tensor()));
  Tensor i = sigmoid(slice_cols(gates, 0, units));
  Tensor f = sigmoid(slice_cols(gates, units, units));
  Tensor g = tanh(slice_cols(gates, 2 * units, units));
  Tensor o = sigmoid(slice_cols(gates, 3 * units, units));
  Tensor c = add(mul(f, state.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace prognet::nn
