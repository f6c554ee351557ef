#include "prognet/net/network.hpp"

#include <algorithm>

#include "prognet/nn/checkpoint.hpp"
#include "prognet/nn/ops.hpp"

namespace prognet::net {

using nn::Parameter;
using nn::Shape;
using nn::Tensor;

std::string to_string(LateralTarget t) {
  switch (t) {
    case LateralTarget::conv: return "conv";
    case LateralTarget::fc: return "fc";
    case LateralTarget::lstm: return "lstm";
    case LateralTarget::heads: return "heads";
  }
  return "?";
}

std::size_t LateralLink::numel() const {
  std::size_t n = weight.numel();
  if (adapter_scale) n += adapter_scale->numel();
  if (adapter_projection) n += adapter_projection->numel();
  return n;
}

std::vector<Parameter*> Column::own_parameters() {
  std::vector<Parameter*> out;
  for (auto& c : convs) {
    out.push_back(&c.kernel);
    out.push_back(&c.bias);
  }
  if (proprio_weight) {
    out.push_back(&*proprio_weight);
    out.push_back(&*proprio_bias);
  }
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  if (lstm) {
    out.push_back(&lstm->w_input);
    out.push_back(&lstm->w_hidden);
    out.push_back(&lstm->bias);
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

std::vector<const Parameter*> Column::own_parameters() const {
  auto mut = const_cast<Column*>(this)->own_parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> Column::lateral_parameters() {
  std::vector<Parameter*> out;
  for (auto& l : laterals) {
    if (l.adapter_scale) out.push_back(&*l.adapter_scale);
    if (l.adapter_projection) out.push_back(&*l.adapter_projection);
    out.push_back(&l.weight);
  }
  return out;
}

std::vector<const Parameter*> Column::lateral_parameters() const {
  auto mut = const_cast<Column*>(this)->lateral_parameters();
  return {mut.begin(), mut.end()};
}

bool Column::frozen() const {
  auto own = own_parameters();
  auto lat = lateral_parameters();
  return std::all_of(own.begin(), own.end(), [](const Parameter* p) { return p->frozen; }) &&
         std::all_of(lat.begin(), lat.end(), [](const Parameter* p) { return p->frozen; });
}

std::size_t ObservationBatch::size() const {
  if (rgb.defined()) return rgb.size(0);
  if (proprio.defined()) return proprio.size(0);
  return 0;
}

namespace {

struct MapShape {
  std::size_t channels, height, width;
  [[nodiscard]] std::size_t numel() const { return channels * height * width; }
};

std::vector<MapShape> conv_shapes(const ColumnSpec& spec, const InputSpec& input) {
  std::vector<MapShape> out;
  if (!uses_vision(spec.inputs)) return out;
  std::size_t h = input.height, w = input.width;
  for (const auto& l : spec.encoder) {
    h = nn::conv_output_size(h, l.kernel, l.stride);
    w = nn::conv_output_size(w, l.kernel, l.stride);
    out.push_back({l.units, h, w});
  }
  return out;
}

std::size_t encoder_width(const ColumnSpec& spec, const InputSpec& input) {
  std::size_t n = 0;
  auto shapes = conv_shapes(spec, input);
  if (!shapes.empty()) n += shapes.back().numel();
  if (spec.proprio_encoder) n += spec.proprio_encoder->units;
  return n;
}

bool pure_vision(const ColumnSpec& spec) { return spec.inputs == Modality::vision; }

Parameter make_param(std::string name, Tensor value) { return Parameter(std::move(name), std::move(value)); }

Parameter weight(const std::string& name, Shape shape, std::size_t fan_in, nn::Rng& rng) {
  return make_param(name, nn::uniform_fan_in(std::move(shape), fan_in, rng));
}

Parameter zeros(const std::string& name, Shape shape) { return make_param(name, Tensor::zeros(std::move(shape))); }

Tensor flatten(const Tensor& map) { return nn::reshape(map, {map.size(0), map.numel() / map.size(0)}); }

}  // namespace

std::size_t ProgressiveNetwork::add_column(const ColumnSpec& spec, std::uint64_t seed,
                                           std::optional<std::size_t> transfer_output_from) {
  spec.validate(input_);
  if (!columns_.empty() && spec.joints != joints()) {
    throw nn::DimensionError("column joints " + std::to_string(spec.joints) + " differ from network joints " +
                             std::to_string(joints()));
  }
  if (transfer_output_from && *transfer_output_from >= columns_.size()) {
    throw SpecError("transfer source column " + std::to_string(*transfer_output_from) + " does not exist");
  }
  if (transfer_output_from) {
    const auto& src = columns_[*transfer_output_from].spec;
    if (src.head_outputs() != spec.head_outputs() || src.actions_per_joint != spec.actions_per_joint) {
      throw nn::DimensionError("output transfer needs matching heads: source has " +
                               std::to_string(src.head_outputs()) + " outputs, new column " +
                               std::to_string(spec.head_outputs()));
    }
  }
  if (!columns_.empty()) freeze_columns(columns_.size() - 1);

  const std::size_t k = columns_.size();
  const std::string prefix = "col" + std::to_string(k) + "/";
  nn::Rng rng(seed);
  Column col;
  col.spec = spec;
  col.index = k;
  col.seed = seed;

  const auto shapes = conv_shapes(spec, input_);
  std::size_t in_channels = input_.channels;
  for (std::size_t i = 0; i < spec.encoder.size(); ++i) {
    const auto& l = spec.encoder[i];
    const std::string name = prefix + "conv" + std::to_string(i) + "/";
    col.convs.push_back({weight(name + "kernel", {l.units, in_channels, l.kernel, l.kernel},
                                in_channels * l.kernel * l.kernel, rng),
                         zeros(name + "bias", {l.units}), l.stride});
    in_channels = l.units;
  }
  if (spec.proprio_encoder) {
    const std::size_t units = spec.proprio_encoder->units;
    col.proprio_weight = weight(prefix + "proprio/weight", {units, input_.proprio_dim}, input_.proprio_dim, rng);
    col.proprio_bias = zeros(prefix + "proprio/bias", {units});
  }
  const std::size_t enc = encoder_width(spec, input_);
  col.fc_weight = weight(prefix + "fc/weight", {spec.fc.units, enc}, enc, rng);
  col.fc_bias = zeros(prefix + "fc/bias", {spec.fc.units});
  if (spec.lstm) {
    const std::size_t n = spec.lstm->units, in = spec.fc.units;
    LstmParams p{weight(prefix + "lstm/w_input", {4 * n, in}, in, rng),
                 weight(prefix + "lstm/w_hidden", {4 * n, n}, n, rng), zeros(prefix + "lstm/bias", {4 * n})};
    auto b = p.bias.value.mutable_data();
    std::fill(b.begin() + n, b.begin() + 2 * n, 1.0);  // forget gate
    col.lstm = std::move(p);
  }
  const std::size_t outputs = spec.head_outputs(), core = spec.core_units();
  col.head_weight = weight(prefix + "heads/weight", {outputs, core}, core, rng);
  col.head_bias = zeros(prefix + "heads/bias", {outputs});

  for (std::size_t j = 0; j < k; ++j) {
    const Column& src = columns_[j];
    const auto src_shapes = conv_shapes(src.spec, input_);
    const std::string lat = prefix + "lateral/";
    const std::string from = "<-col" + std::to_string(j);
    const bool adapter = spec.lateral_mode == LateralMode::adapter;

    auto make_link = [&](LateralTarget target, std::size_t layer, const std::string& tag) {
      LateralLink link;
      link.source_column = j;
      link.target_column = k;
      link.target = target;
      link.layer = layer;
      link.mode = target == LateralTarget::heads ? LateralMode::linear : spec.lateral_mode;
      if (link.mode == LateralMode::adapter) {
        link.adapter_scale = make_param(lat + tag + from + "/scale", Tensor::full({1}, 1.0));
      }
      return link;
    };

    // conv layer i <- source conv layer i-1, when both maps line up spatially.
    for (std::size_t i = 1; i < shapes.size(); ++i) {
      if (i - 1 >= src_shapes.size()) break;
      const auto& s = src_shapes[i - 1];
      const auto& own_in = shapes[i - 1];
      if (s.height != own_in.height || s.width != own_in.width) continue;
      const auto& l = spec.encoder[i];
      const std::string tag = "conv" + std::to_string(i);
      LateralLink link = make_link(LateralTarget::conv, i, tag);
      link.stride = l.stride;
      std::size_t u_in = s.channels;
      if (adapter) {
        link.adapter_projection = weight(lat + tag + from + "/projection", {own_in.channels, s.channels, 1, 1},
                                         s.channels, rng);
        link.projection_is_conv = true;
        u_in = own_in.channels;
      }
      link.weight = weight(lat + tag + from + "/U", {l.units, u_in, l.kernel, l.kernel}, u_in * l.kernel * l.kernel, rng);
      col.laterals.push_back(std::move(link));
    }

    // fc <- source encoder output.
    {
      LateralLink link = make_link(LateralTarget::fc, 0, "fc");
      const std::size_t src_enc = encoder_width(src.spec, input_);
      std::size_t u_in = src_enc;
      if (adapter) {
        const bool map_projection = pure_vision(spec) && pure_vision(src.spec) && !shapes.empty() &&
                                    !src_shapes.empty() && shapes.back().height == src_shapes.back().height &&
                                    shapes.back().width == src_shapes.back().width;
        if (map_projection) {
          link.adapter_projection = weight(lat + "fc" + from + "/projection",
                                           {shapes.back().channels, src_shapes.back().channels, 1, 1},
                                           src_shapes.back().channels, rng);
          link.projection_is_conv = true;
        } else {
          link.adapter_projection = weight(lat + "fc" + from + "/projection", {enc, src_enc}, src_enc, rng);
        }
        u_in = enc;
      }
      link.weight = weight(lat + "fc" + from + "/U", {spec.fc.units, u_in}, u_in, rng);
      col.laterals.push_back(std::move(link));
    }

    // lstm input <- source fc.
    if (spec.lstm) {
      LateralLink link = make_link(LateralTarget::lstm, 0, "lstm");
      std::size_t u_in = src.spec.fc.units;
      if (adapter) {
        link.adapter_projection =
            weight(lat + "lstm" + from + "/projection", {spec.fc.units, src.spec.fc.units}, src.spec.fc.units, rng);
        u_in = spec.fc.units;
      }
      link.weight = weight(lat + "lstm" + from + "/U", {spec.fc.units, u_in}, u_in, rng);
      col.laterals.push_back(std::move(link));
    }

    // heads <- source core (lstm h or fc); never adapted.
    {
      LateralLink link = make_link(LateralTarget::heads, 0, "heads");
      const std::size_t src_core = src.spec.core_units();
      link.weight = weight(lat + "heads" + from + "/U", {outputs, src_core}, src_core, rng);
      col.laterals.push_back(std::move(link));
    }
  }

  columns_.push_back(std::move(col));
  transfer_from_.push_back(transfer_output_from);
  if (transfer_output_from) init_output_transfer(*transfer_output_from, k);
  return k;
}

void ProgressiveNetwork::init_output_transfer(std::size_t from, std::size_t to) {
  if (from >= to || to >= columns_.size()) {
    throw SpecError("output transfer requires source " + std::to_string(from) + " < target " + std::to_string(to));
  }
  const Column& src = columns_[from];
  Column& dst = columns_[to];
  if (src.spec.head_outputs() != dst.spec.head_outputs() ||
      src.spec.actions_per_joint != dst.spec.actions_per_joint) {
    throw nn::DimensionError("output transfer arity mismatch: " + nn::to_string(src.head_weight.value.shape()) + " vs " +
                             nn::to_string(dst.head_weight.value.shape()));
  }
  auto fill = [](Parameter& p, double v) {
    auto d = p.value.mutable_data();
    std::fill(d.begin(), d.end(), v);
  };
  auto copy = [](const Parameter& s, Parameter& d) {
    if (s.value.shape() != d.value.shape()) {
      throw nn::DimensionError("output transfer shape mismatch for " + d.name + ": " + nn::to_string(s.value.shape()) +
                               " vs " + nn::to_string(d.value.shape()));
    }
    std::copy(s.value.data().begin(), s.value.data().end(), d.value.mutable_data().begin());
  };

  fill(dst.head_weight, 0.0);
  copy(src.head_bias, dst.head_bias);
  for (auto& link : dst.laterals) {
    if (link.target != LateralTarget::heads) continue;
    if (link.source_column == from) {
      copy(src.head_weight, link.weight);
      continue;
    }
    // Reproduce the source's own head laterals; silence every other prior column.
    auto it = std::find_if(src.laterals.begin(), src.laterals.end(), [&](const LateralLink& l) {
      return l.target == LateralTarget::heads && l.source_column == link.source_column;
    });
    if (it != src.laterals.end()) {
      copy(it->weight, link.weight);
    } else {
      fill(link.weight, 0.0);
    }
  }
}

void ProgressiveNetwork::freeze_columns(std::size_t upto) {
  for (std::size_t k = 0; k <= upto && k < columns_.size(); ++k) {
    for (Parameter* p : columns_[k].own_parameters()) p->freeze();
    for (Parameter* p : columns_[k].lateral_parameters()) p->freeze();
  }
}

void ProgressiveNetwork::unfreeze_column(std::size_t index) {
  for (Parameter* p : columns_.at(index).own_parameters()) p->unfreeze();
  for (Parameter* p : columns_.at(index).lateral_parameters()) p->unfreeze();
}

std::size_t ProgressiveNetwork::param_count(bool include_laterals) const {
  std::size_t n = 0;
  for (const auto& c : columns_) {
    for (const Parameter* p : c.own_parameters()) n += p->numel();
    if (include_laterals) {
      for (const auto& l : c.laterals) n += l.numel();
    }
  }
  return n;
}

std::size_t ProgressiveNetwork::active() const {
  if (columns_.empty()) throw nn::UsageError("network has no columns");
  return columns_.size() - 1;
}

std::size_t ProgressiveNetwork::joints() const {
  if (columns_.empty()) throw nn::UsageError("network has no columns");
  return columns_.front().spec.joints;
}

std::vector<Parameter*> ProgressiveNetwork::parameters() {
  std::vector<Parameter*> out;
  for (auto& c : columns_) {
    for (Parameter* p : c.own_parameters()) out.push_back(p);
    for (Parameter* p : c.lateral_parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> ProgressiveNetwork::parameters() const {
  auto mut = const_cast<ProgressiveNetwork*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> ProgressiveNetwork::trainable_parameters() {
  auto all = parameters();
  std::erase_if(all, [](const Parameter* p) { return p->frozen; });
  return all;
}

std::size_t ProgressiveNetwork::lateral_count() const {
  std::size_t n = 0;
  for (const auto& c : columns_) n += c.laterals.size();
  return n;
}

NetworkState ProgressiveNetwork::initial_state(std::size_t batch) const {
  NetworkState s;
  for (const auto& c : columns_) {
    if (c.lstm) {
      s.columns.emplace_back(nn::lstm_zero_state(batch, c.spec.lstm->units));
    } else {
      s.columns.emplace_back(std::nullopt);
    }
  }
  return s;
}

ForwardResult ProgressiveNetwork::forward(const ObservationBatch& obs, NetworkState& state,
                                          std::optional<std::size_t> output_column) const {
  return run(obs, state, nullptr, output_column);
}

ForwardResult ProgressiveNetwork::forward_sequence(const ObservationBatch& obs, NetworkState& state,
                                                   const std::vector<bool>& episode_start,
                                                   std::optional<std::size_t> output_column) const {
  if (episode_start.size() != obs.size()) {
    throw nn::DimensionError("episode_start has " + std::to_string(episode_start.size()) + " flags for " +
                             std::to_string(obs.size()) + " steps");
  }
  return run(obs, state, &episode_start, output_column);
}

namespace {

Tensor apply_lateral(const LateralLink& link, const Tensor& source_map, const Tensor& source_flat) {
  switch (link.target) {
    case LateralTarget::conv: {
      Tensor x = source_map;
      if (link.mode == LateralMode::adapter) {
        x = nn::relu(nn::conv2d(nn::scale_by(x, link.adapter_scale->value), link.adapter_projection->value, Tensor(), 1));
      }
      return nn::conv2d(x, link.weight.value, Tensor(), link.stride);
    }
    case LateralTarget::fc:
    case LateralTarget::lstm: {
      Tensor x = source_flat;
      if (link.mode == LateralMode::adapter) {
        if (link.projection_is_conv) {
          x = flatten(nn::relu(
              nn::conv2d(nn::scale_by(source_map, link.adapter_scale->value), link.adapter_projection->value, Tensor(), 1)));
        } else {
          x = nn::relu(nn::linear(nn::scale_by(x, link.adapter_scale->value), link.adapter_projection->value, Tensor()));
        }
      }
      return nn::linear(x, link.weight.value, Tensor());
    }
    case LateralTarget::heads: return nn::linear(source_flat, link.weight.value, Tensor());
  }
  throw nn::UsageError("unknown lateral target");
}

}  // namespace

ForwardResult ProgressiveNetwork::run(const ObservationBatch& obs, NetworkState& state,
                                      const std::vector<bool>* episode_start,
                                      std::optional<std::size_t> output_column) const {
  if (columns_.empty()) throw nn::UsageError("forward on a network with no columns");
  const std::size_t out = output_column.value_or(active());
  if (out >= columns_.size()) throw nn::UsageError("output column " + std::to_string(out) + " does not exist");
  const std::size_t n = obs.size();
  if (n == 0) throw InputError("empty observation batch");
  if (state.columns.size() != columns_.size()) {
    throw nn::DimensionError("network state has " + std::to_string(state.columns.size()) + " columns, network has " +
                             std::to_string(columns_.size()));
  }

  ForwardResult result;
  result.columns.resize(out + 1);
  for (std::size_t k = 0; k <= out; ++k) {
    const Column& col = columns_[k];
    ColumnActivations& act = result.columns[k];
    auto laterals_into = [&](LateralTarget target, std::size_t layer, std::vector<Tensor>& terms) {
      for (const auto& link : col.laterals) {
        if (link.target != target || link.layer != layer) continue;
        const ColumnActivations& src = result.columns[link.source_column];
        switch (target) {
          case LateralTarget::conv: terms.push_back(apply_lateral(link, src.convs[layer - 1], Tensor())); break;
          case LateralTarget::fc:
            terms.push_back(apply_lateral(link, src.convs.empty() ? Tensor() : src.convs.back(), src.encoder));
            break;
          case LateralTarget::lstm: terms.push_back(apply_lateral(link, Tensor(), src.fc)); break;
          case LateralTarget::heads: terms.push_back(apply_lateral(link, Tensor(), src.core)); break;
        }
      }
    };

    std::vector<Tensor> encoder_parts;
    if (uses_vision(col.spec.inputs)) {
      if (!obs.rgb.defined()) throw InputError("column " + std::to_string(k) + " needs rgb input");
      const auto& rs = obs.rgb.shape();
      if (rs.size() != 4 || rs[1] != input_.channels || rs[2] != input_.height || rs[3] != input_.width) {
        throw InputError("rgb input " + nn::to_string(rs) + " does not match input spec");
      }
      Tensor x = obs.rgb;
      for (std::size_t i = 0; i < col.convs.size(); ++i) {
        const auto& c = col.convs[i];
        std::vector<Tensor> terms{nn::conv2d(x, c.kernel.value, c.bias.value, c.stride)};
        laterals_into(LateralTarget::conv, i, terms);
        x = nn::relu(nn::add_n(terms));
        act.convs.push_back(x);
      }
      encoder_parts.push_back(flatten(x));
    }
    if (uses_proprio(col.spec.inputs)) {
      if (!obs.proprio.defined()) throw InputError("column " + std::to_string(k) + " needs proprio input");
      if (obs.proprio.dim() != 2 || obs.proprio.size(1) != input_.proprio_dim || obs.proprio.size(0) != n) {
        throw InputError("proprio input " + nn::to_string(obs.proprio.shape()) + " does not match input spec");
      }
      act.proprio = nn::relu(nn::linear(obs.proprio, col.proprio_weight->value, col.proprio_bias->value));
      encoder_parts.push_back(act.proprio);
    }
    act.encoder = nn::concat_cols(encoder_parts);

    {
      std::vector<Tensor> terms{nn::linear(act.encoder, col.fc_weight.value, col.fc_bias.value)};
      laterals_into(LateralTarget::fc, 0, terms);
      act.fc = nn::relu(nn::add_n(terms));
    }

    if (col.lstm) {
      std::vector<Tensor> terms{act.fc};
      laterals_into(LateralTarget::lstm, 0, terms);
      Tensor lstm_in = nn::add_n(terms);
      auto& st = state.columns[k];
      const std::size_t units = col.spec.lstm->units;
      const std::size_t state_batch = episode_start ? 1 : n;
      if (!st || st->h.shape() != Shape{state_batch, units}) {
        throw nn::DimensionError("recurrent state for column " + std::to_string(k) + " must be [" +
                                 std::to_string(state_batch) + ", " + std::to_string(units) + "]");
      }
      const auto& p = *col.lstm;
      if (!episode_start) {
        st = nn::lstm_step(lstm_in, *st, p.w_input.value, p.w_hidden.value, p.bias.value);
        act.lstm = st->h;
      } else {
        std::vector<Tensor> hs;
        hs.reserve(n);
        for (std::size_t t = 0; t < n; ++t) {
          if ((*episode_start)[t]) st = nn::lstm_zero_state(1, units);
          st = nn::lstm_step(nn::slice_rows(lstm_in, t, 1), *st, p.w_input.value, p.w_hidden.value, p.bias.value);
          hs.push_back(st->h);
        }
        act.lstm = nn::concat_rows(hs);
      }
      act.core = act.lstm;
    } else {
      act.core = act.fc;
    }

    if (k == out) {
      std::vector<Tensor> terms{nn::linear(act.core, col.head_weight.value, col.head_bias.value)};
      laterals_into(LateralTarget::heads, 0, terms);
      result.heads = nn::add_n(terms);
      const std::size_t policy = col.spec.joints * col.spec.actions_per_joint;
      result.logits = nn::slice_cols(result.heads, 0, policy);
      result.value = nn::slice_cols(result.heads, policy, 1);
    }
  }
  return result;
}

ProgressiveNetwork ProgressiveNetwork::clone() const {
  ProgressiveNetwork copy = *this;
  for (Parameter* p : copy.parameters()) {
    p->value = p->value.clone();
    p->value.set_requires_grad(!p->frozen);
  }
  return copy;
}

void ProgressiveNetwork::copy_values_from(const ProgressiveNetwork& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw nn::DimensionError("copy_values_from: parameter count differs");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->value.shape() != src[i]->value.shape()) {
      throw nn::DimensionError("copy_values_from: shape mismatch for " + dst[i]->name);
    }
    auto s = src[i]->value.data();
    std::copy(s.begin(), s.end(), dst[i]->value.mutable_data().begin());
  }
}

nlohmann::json ProgressiveNetwork::architecture() const {
  nlohmann::json j;
  j["format"] = "prognet-architecture";
  j["version"] = 1;
  j["input"] = to_json(input_);
  j["columns"] = nlohmann::json::array();
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    nlohmann::json c;
    c["spec"] = to_json(columns_[k].spec);
    c["seed"] = columns_[k].seed;
    c["transfer_output_from"] = transfer_from_[k] ? nlohmann::json(*transfer_from_[k]) : nlohmann::json(nullptr);
    j["columns"].push_back(std::move(c));
  }
  return j;
}

std::uint64_t ProgressiveNetwork::architecture_hash() const { return nn::fnv1a64(architecture().dump()); }

ProgressiveNetwork ProgressiveNetwork::from_architecture(const nlohmann::json& arch) {
  try {
    if (arch.at("format").get<std::string>() != "prognet-architecture") throw SpecError("not an architecture file");
    if (arch.at("version").get<int>() != 1) throw SpecError("unsupported architecture version");
    ProgressiveNetwork net(input_spec_from_json(arch.at("input")));
    for (const auto& c : arch.at("columns")) {
      std::optional<std::size_t> transfer;
      if (!c.at("transfer_output_from").is_null()) transfer = c["transfer_output_from"].get<std::size_t>();
      net.add_column(column_spec_from_json(c.at("spec")), c.at("seed").get<std::uint64_t>(), transfer);
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed architecture: ") + e.what());
  }
}

std::vector<bool> activation_pattern(const ForwardResult& r) {
  std::vector<bool> out;
  auto add = [&](const Tensor& t) {
    if (!t.defined()) return;
    for (double v : t.data()) out.push_back(v > 0.0);
  };
  for (const auto& c : r.columns) {
    for (const auto& m : c.convs) add(m);
    add(c.proprio);
    add(c.fc);
  }
  return out;
}

}  // namespace prognet::net
