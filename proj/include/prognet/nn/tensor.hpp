#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prognet::nn {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an API is used out of contract (e.g. backward on a non-scalar).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown when a NaN or Inf reaches a place that requires finite values.
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient contribution arrives.
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;

  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(TensorImpl&)> backward_fn;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major array of doubles with optional reverse-mode gradient.
///
/// Tensor is a handle: copies share the same storage. Use clone() for a
/// deep copy. Values produced by operations while a Tape is active are
/// recorded on that tape when any input requires a gradient.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  [[nodiscard]] bool defined() const { return impl_ != nullptr; }
  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t dim() const { return shape().size(); }
  [[nodiscard]] std::size_t size(std::size_t axis) const;
  [[nodiscard]] std::size_t numel() const;

  [[nodiscard]] std::span<const double> data() const;
  [[nodiscard]] std::span<double> mutable_data();
  [[nodiscard]] double item() const;
  [[nodiscard]] double at(std::size_t flat_index) const { return data()[flat_index]; }

  [[nodiscard]] bool requires_grad() const;
  void set_requires_grad(bool value);
  [[nodiscard]] bool has_grad() const;
  /// Gradient view; all zeros-length when no gradient has been accumulated.
  [[nodiscard]] std::span<const double> grad() const;
  [[nodiscard]] std::span<double> mutable_grad();
  /// Resets an existing gradient buffer to exactly zero.
  void zero_grad();

  [[nodiscard]] bool all_finite() const;

  /// Deep copy of the values, detached from any graph.
  [[nodiscard]] Tensor clone() const;

  [[nodiscard]] const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// A named, trainable (unless frozen) tensor.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v);

  void freeze();
  void unfreeze();
  [[nodiscard]] std::size_t numel() const { return value.numel(); }
};

using ParameterRef = std::reference_wrapper<Parameter>;

}  // namespace prognet::nn
