#pragma once

// Small builders shared by the unit and acceptance tests.

#include <cmath>
#include <random>
#include <vector>

#include "dense_oracle.hpp"
#include "prognet/env/reacher.hpp"
#include "prognet/net/network.hpp"

namespace fixtures {

using namespace prognet;

inline net::InputSpec input(std::size_t size, std::size_t proprio = 0) {
  net::InputSpec in;
  in.height = in.width = size;
  in.proprio_dim = proprio;
  return in;
}

inline net::ColumnSpec tiny_vision(std::size_t joints, std::size_t c1, std::size_t c2, std::size_t fc, std::size_t lstm) {
  net::ColumnSpec s;
  s.label = "tiny";
  s.encoder = {nn::LayerSpec::conv(c1, 3, 1), nn::LayerSpec::conv(c2, 2, 2)};
  s.fc = nn::LayerSpec::linear(fc);
  if (lstm) s.lstm = nn::LayerSpec::lstm(lstm);
  s.joints = joints;
  return s;
}

inline void randomize(net::ProgressiveNetwork& n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto* p : n.parameters())
    for (double& v : p->value.mutable_data()) v = u(rng);
}

inline net::ObservationBatch random_obs(const net::InputSpec& in, std::size_t batch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  net::ObservationBatch obs;
  obs.rgb = nn::Tensor({batch, in.channels, in.height, in.width});
  for (double& v : obs.rgb.mutable_data()) v = u(rng);
  if (in.proprio_dim) {
    obs.proprio = nn::Tensor({batch, in.proprio_dim});
    for (double& v : obs.proprio.mutable_data()) v = 2.0 * u(rng) - 1.0;
  }
  return obs;
}

inline oracle::Map3 image_row(const net::ObservationBatch& obs, std::size_t row) {
  const auto& s = obs.rgb.shape();
  const std::size_t n = s[1] * s[2] * s[3];
  oracle::Map3 m{s[1], s[2], s[3], {}};
  m.v.assign(obs.rgb.data().begin() + row * n, obs.rgb.data().begin() + (row + 1) * n);
  return m;
}

inline oracle::Vec proprio_row(const net::ObservationBatch& obs, std::size_t row) {
  if (!obs.proprio.defined()) return {};
  const std::size_t d = obs.proprio.size(1);
  return {obs.proprio.data().begin() + row * d, obs.proprio.data().begin() + (row + 1) * d};
}

/// Largest |library head - oracle head| over `steps` random observations fed in sequence.
inline double max_oracle_gap(net::ProgressiveNetwork& n, std::mt19937_64& rng, std::size_t steps) {
  const oracle::Weights W(n);
  std::vector<std::optional<oracle::LstmMemory>> memory;
  auto state = n.initial_state(1);
  double gap = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    auto obs = random_obs(n.input(), 1, rng);
    auto img = image_row(obs, 0);
    auto pro = proprio_row(obs, 0);
    auto got = n.forward(obs, state);
    auto want = oracle::evaluate(n, W, &img, &pro, memory, n.active());
    if (got.heads.numel() != want.heads.size()) return INFINITY;
    for (std::size_t i = 0; i < want.heads.size(); ++i) gap = std::max(gap, std::abs(got.heads.at(i) - want.heads[i]));
  }
  return gap;
}

// Planar chain, angles relative and measured from the +y axis.
inline env::Point fk_oracle(const std::vector<double>& q, const std::vector<double>& links) {
  double phi = 0.0, x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    phi += q[i];
    x += links[i] * std::sin(phi);
    y += links[i] * std::cos(phi);
  }
  return {x, y};
}

}  // namespace fixtures
