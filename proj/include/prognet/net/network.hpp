#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prognet/net/column_spec.hpp"
#include "prognet/nn/layers.hpp"
#include "prognet/nn/tensor.hpp"

namespace prognet::net {

/// An observation lacks a modality some column reads, or has the wrong shape.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Which layer of the target column a lateral feeds.
enum class LateralTarget { conv, fc, lstm, heads };
std::string to_string(LateralTarget t);

/// Lateral connection U^(k:j) from column j's layer i-1 into column k's layer i.
///
/// In linear mode the contribution is `weight` applied to the source
/// activation. In adapter mode it is weight(relu(projection(scale * h))),
/// where the projection reduces the source to the target column's own
/// input width for that layer. Heads always use linear mode.
struct LateralLink {
  std::size_t source_column = 0;
  std::size_t target_column = 0;
  LateralTarget target = LateralTarget::fc;
  std::size_t layer = 0;  // conv layer index for conv targets, else 0
  LateralMode mode = LateralMode::linear;
  std::size_t stride = 1;  // conv targets
  nn::Parameter weight;
  std::optional<nn::Parameter> adapter_scale;
  std::optional<nn::Parameter> adapter_projection;
  bool projection_is_conv = false;

  [[nodiscard]] std::size_t numel() const;
};

struct ConvParams {
  nn::Parameter kernel;
  nn::Parameter bias;
  std::size_t stride = 1;
};

struct LstmParams {
  nn::Parameter w_input;
  nn::Parameter w_hidden;
  nn::Parameter bias;
};

/// One column's own parameters plus its incoming laterals.
struct Column {
  ColumnSpec spec;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<ConvParams> convs;
  std::optional<nn::Parameter> proprio_weight;
  std::optional<nn::Parameter> proprio_bias;
  nn::Parameter fc_weight;
  nn::Parameter fc_bias;
  std::optional<LstmParams> lstm;
  nn::Parameter head_weight;
  nn::Parameter head_bias;
  std::vector<LateralLink> laterals;

  [[nodiscard]] std::vector<nn::Parameter*> own_parameters();
  [[nodiscard]] std::vector<const nn::Parameter*> own_parameters() const;
  [[nodiscard]] std::vector<nn::Parameter*> lateral_parameters();
  [[nodiscard]] std::vector<const nn::Parameter*> lateral_parameters() const;
  [[nodiscard]] bool frozen() const;
};

/// Observations for a batch (or a time sequence) of environment steps.
struct ObservationBatch {
  nn::Tensor rgb;      // [N, C, H, W] or undefined
  nn::Tensor proprio;  // [N, D] or undefined
  [[nodiscard]] std::size_t size() const;
};

/// Recurrent state for every column (empty optional for feedforward columns).
struct NetworkState {
  std::vector<std::optional<nn::LstmState>> columns;
};

/// Per-column intermediate activations of one forward pass.
struct ColumnActivations {
  std::vector<nn::Tensor> convs;  // post-ReLU feature maps
  nn::Tensor proprio;             // post-ReLU proprio features
  nn::Tensor encoder;             // flattened conv features joined with proprio features
  nn::Tensor fc;
  nn::Tensor lstm;  // h sequence / batch when recurrent
  nn::Tensor core;  // lstm when recurrent, else fc
};

struct ForwardResult {
  std::vector<ColumnActivations> columns;
  nn::Tensor heads;   // [N, 3K + 1]
  nn::Tensor logits;  // [N, 3K]
  nn::Tensor value;   // [N, 1]
};

/// Sign pattern (x > 0) of the conv, proprio and fc ReLU units of every column.
/// Adapter ReLUs are not included.
std::vector<bool> activation_pattern(const ForwardResult& r);

/// Ordered columns joined by lateral connections.
///
/// Column k computes, for each non-input layer i,
///   h_i^(k) = f(W_i^(k) h_{i-1}^(k) + sum_{j<k} U_i^(k:j) h_{i-1}^(j))
/// with f = ReLU on hidden layers and identity on the heads. Every column
/// before the active one is frozen.
class ProgressiveNetwork {
 public:
  ProgressiveNetwork() = default;
  explicit ProgressiveNetwork(InputSpec input) : input_(input) {}

  /// Freezes existing columns, appends a column with laterals from every
  /// prior column, and optionally applies init_output_transfer from
  /// `transfer_output_from`. Returns the new column's index.
  std::size_t add_column(const ColumnSpec& spec, std::uint64_t seed,
                         std::optional<std::size_t> transfer_output_from = std::nullopt);

  /// Zero the target column's own head weights, carry over the source's
  /// head bias and copy the source head (own and lateral weights) onto the
  /// target's head laterals, so both columns output identical heads.
  void init_output_transfer(std::size_t from, std::size_t to);

  /// Freezes all parameters of columns 0..upto (inclusive).
  void freeze_columns(std::size_t upto);
  /// Unfreezes column `index` (finetuning).
  void unfreeze_column(std::size_t index);

  [[nodiscard]] std::size_t param_count(bool include_laterals) const;

  [[nodiscard]] const InputSpec& input() const { return input_; }
  [[nodiscard]] std::size_t num_columns() const { return columns_.size(); }
  [[nodiscard]] bool empty() const { return columns_.empty(); }
  [[nodiscard]] std::size_t active() const;
  [[nodiscard]] const Column& column(std::size_t k) const { return columns_.at(k); }
  [[nodiscard]] Column& column(std::size_t k) { return columns_.at(k); }
  [[nodiscard]] std::size_t joints() const;

  [[nodiscard]] std::vector<nn::Parameter*> parameters();
  [[nodiscard]] std::vector<const nn::Parameter*> parameters() const;
  [[nodiscard]] std::vector<nn::Parameter*> trainable_parameters();
  [[nodiscard]] std::size_t lateral_count() const;

  [[nodiscard]] NetworkState initial_state(std::size_t batch = 1) const;

  /// Batch mode: axis 0 of `obs` indexes independent samples, each sharing
  /// `state` (which must have matching batch). Advances recurrent state by
  /// one step. Heads are produced for `output_column` (default: active).
  ForwardResult forward(const ObservationBatch& obs, NetworkState& state,
                        std::optional<std::size_t> output_column = std::nullopt) const;

  /// Sequence mode: axis 0 of `obs` is time for a single environment.
  /// `episode_start[t]` resets recurrent state to zero before step t.
  /// `state` (batch 1) is advanced to the state after the last step.
  ForwardResult forward_sequence(const ObservationBatch& obs, NetworkState& state,
                                 const std::vector<bool>& episode_start,
                                 std::optional<std::size_t> output_column = std::nullopt) const;

  /// Deep copy; parameter storage is not shared.
  [[nodiscard]] ProgressiveNetwork clone() const;
  /// Copies parameter values from a network with identical structure.
  void copy_values_from(const ProgressiveNetwork& other);

  /// Architecture description: columns, layer specs, lateral modes, transfer flags.
  [[nodiscard]] nlohmann::json architecture() const;
  [[nodiscard]] std::uint64_t architecture_hash() const;
  /// Rebuilds a network (random values) from architecture(); load a checkpoint for values.
  static ProgressiveNetwork from_architecture(const nlohmann::json& arch);

 private:
  ForwardResult run(const ObservationBatch& obs, NetworkState& state, const std::vector<bool>* episode_start,
                    std::optional<std::size_t> output_column) const;

  InputSpec input_;
  std::vector<Column> columns_;
  std::vector<std::optional<std::size_t>> transfer_from_;
};

}  // namespace prognet::net
