#include "prognet/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "prognet/nn/tape.hpp"

namespace prognet::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
using CVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using MVecMap = Eigen::Map<Eigen::RowVectorXd>;

using BackwardFn = std::function<void(detail::TensorImpl&)>;

bool needs_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

Tensor make_output(Shape shape, std::vector<double> data, std::span<const Tensor> inputs, BackwardFn fn) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  Tape* tape = Tape::active();
  bool record = tape != nullptr && std::any_of(inputs.begin(), inputs.end(), needs_grad);
  if (record) {
    impl->requires_grad = true;
    impl->is_leaf = false;
    for (const auto& in : inputs) impl->parents.push_back(in.defined() ? in.impl() : nullptr);
    impl->backward_fn = std::move(fn);
    tape->record(impl);
  }
  return Tensor(std::move(impl));
}

Tensor make_output(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  return make_output(std::move(shape), std::move(data), std::span<const Tensor>(inputs.begin(), inputs.size()),
                     std::move(fn));
}

// Gradient buffer of parent `i`, or nullptr when that parent takes no gradient.
double* parent_grad(detail::TensorImpl& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return p->ensure_grad().data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.dim() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_output(x.shape(), std::move(out), {x}, [deriv](detail::TensorImpl& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xs = self.parents[0]->data;
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += self.grad[i] * deriv(xs[i], self.data[i]);
  });
}

}  // namespace

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw DimensionError("kernel and stride must be >= 1");
  if (input < kernel) {
    throw DimensionError("input extent " + std::to_string(input) + " smaller than kernel " + std::to_string(kernel));
  }
  return (input - kernel) / stride + 1;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t batch = x.size(0), in = x.size(1), out = weight.size(0);
  if (weight.size(1) != in) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  if (bias.defined() && bias.numel() != out) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  std::vector<double> y(batch * out);
  MMap Y(y.data(), batch, out);
  CMap X(x.data().data(), batch, in);
  CMap W(weight.data().data(), out, in);
  Y.noalias() = X * W.transpose();
  if (bias.defined()) Y.rowwise() += CVecMap(bias.data().data(), out);

  return make_output({batch, out}, std::move(y), {x, weight, bias},
                     [batch, in, out](detail::TensorImpl& self) {
                       CMap dY(self.grad.data(), batch, out);
                       if (double* gx = parent_grad(self, 0)) {
                         MMap(gx, batch, in).noalias() += dY * CMap(self.parents[1]->data.data(), out, in);
                       }
                       if (double* gw = parent_grad(self, 1)) {
                         MMap(gw, out, in).noalias() += dY.transpose() * CMap(self.parents[0]->data.data(), batch, in);
                       }
                       if (double* gb = parent_grad(self, 2)) {
                         MVecMap(gb, out) += dY.colwise().sum();
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t batch = x.size(0), cin = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t cout = kernel.size(0), kh = kernel.size(2), kw = kernel.size(3);
  if (kernel.size(1) != cin) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " incompatible with kernel " +
                         to_string(kernel.shape()));
  }
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " incompatible with kernel " +
                         to_string(kernel.shape()));
  }
  if (h < kh || w < kw) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " smaller than kernel " +
                         to_string(kernel.shape()));
  }
  const std::size_t oh = conv_output_size(h, kh, stride), ow = conv_output_size(w, kw, stride);
  const std::size_t positions = oh * ow, patch = cin * kh * kw;

  std::vector<double> cols(batch * positions * patch);
  const double* xs = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* cb = cols.data() + b * positions * patch;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* row = cb + (oy * ow + ox) * patch;
        for (std::size_t c = 0; c < cin; ++c) {
          const double* plane = xs + ((b * cin + c) * h) * w;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const double* src = plane + (oy * stride + ky) * w + ox * stride;
            std::copy(src, src + kw, row);
            row += kw;
          }
        }
      }
    }
  }

  std::vector<double> y(batch * cout * positions);
  CMap K(kernel.data().data(), cout, patch);
  for (std::size_t b = 0; b < batch; ++b) {
    MMap Y(y.data() + b * cout * positions, cout, positions);
    Y.noalias() = K * CMap(cols.data() + b * positions * patch, positions, patch).transpose();
    if (bias.defined()) Y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data().data(), cout);
  }

  return make_output(
      {batch, cout, oh, ow}, std::move(y), {x, kernel, bias},
      [=, cols = std::move(cols)](detail::TensorImpl& self) {
        double* gx = parent_grad(self, 0);
        double* gk = parent_grad(self, 1);
        double* gb = parent_grad(self, 2);
        const double* kdata = self.parents[1]->data.data();
        RowMat dcols;
        for (std::size_t b = 0; b < batch; ++b) {
          CMap dY(self.grad.data() + b * cout * positions, cout, positions);
          CMap cb(cols.data() + b * positions * patch, positions, patch);
          if (gk) MMap(gk, cout, patch).noalias() += dY * cb;
          if (gb) Eigen::Map<Eigen::VectorXd>(gb, cout) += dY.rowwise().sum();
          if (gx) {
            dcols.noalias() = dY.transpose() * CMap(kdata, cout, patch);
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* row = dcols.data() + (oy * ow + ox) * patch;
                for (std::size_t c = 0; c < cin; ++c) {
                  double* plane = gx + ((b * cin + c) * h) * w;
                  for (std::size_t ky = 0; ky < kh; ++ky) {
                    double* dst = plane + (oy * stride + ky) * w + ox * stride;
                    for (std::size_t kx = 0; kx < kw; ++kx) dst[kx] += row[kx];
                    row += kw;
                  }
                }
              }
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_output(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_output(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_output(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return make_output(x.shape(), std::move(out), {x}, [factor](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor scale_by(const Tensor& x, const Tensor& factor) {
  if (factor.numel() != 1) throw DimensionError("scale_by: factor must have one element, got " + to_string(factor.shape()));
  const double f = factor.item();
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * f;
  return make_output(x.shape(), std::move(out), {x, factor}, [](detail::TensorImpl& self) {
    const auto& xs = self.parents[0]->data;
    const double f = self.parents[1]->data[0];
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * f;
    }
    if (double* g = parent_grad(self, 1)) {
      double total = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) total += self.grad[i] * xs[i];
      g[0] += total;
    }
  });
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw UsageError("add_n of no terms");
  if (terms.size() == 1) return terms[0];
  for (const auto& t : terms) require_same(terms[0], t, "add_n");
  std::vector<double> out(terms[0].data().begin(), terms[0].data().end());
  for (std::size_t k = 1; k < terms.size(); ++k) {
    auto v = terms[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_output(terms[0].shape(), std::move(out), terms, [](detail::TensorImpl& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_output({1}, {total}, {x}, [](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      const double d = self.grad[0];
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += d;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols of no parts");
  if (parts.size() == 1) return parts[0];
  const std::size_t rows = parts[0].size(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols part");
    if (p.size(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    }
    widths.push_back(p.size(1));
    total += p.size(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  return make_output({rows, total}, std::move(out), parts, [rows, total, widths](detail::TensorImpl& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* g = parent_grad(self, k)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
        }
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows of no parts");
  if (parts.size() == 1) return parts[0];
  Shape inner(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != inner) {
      throw DimensionError("concat_rows: trailing shape mismatch " + to_string(parts[0].shape()) + " vs " +
                           to_string(p.shape()));
    }
    rows += p.size(0);
    sizes.push_back(p.numel());
  }
  std::vector<double> out;
  out.reserve(rows * numel(inner));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape{rows};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_output(std::move(shape), std::move(out), parts, [sizes](detail::TensorImpl& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (double* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.size(0), width = x.size(1);
  if (count == 0 || start + count > width) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of bounds for " + to_string(x.shape()));
  }
  auto v = x.data();
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * width + start, count, out.data() + r * count);
  return make_output({rows, count}, std::move(out), {x}, [rows, width, start, count](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) g[r * width + start + c] += self.grad[r * count + c];
      }
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t rows = x.size(0);
  if (count == 0 || start + count > rows) {
    throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of bounds for " + to_string(x.shape()));
  }
  const std::size_t stride = x.numel() / rows;
  auto v = x.data();
  std::vector<double> out(v.begin() + start * stride, v.begin() + (start + count) * stride);
  Shape shape = x.shape();
  shape[0] = count;
  return make_output(std::move(shape), std::move(out), {x}, [start, stride](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * stride + i] += self.grad[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_output(std::move(shape), std::move(out), {x}, [](detail::TensorImpl& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

namespace {

void check_groups(const Tensor& x, std::size_t group, const char* what) {
  require_rank(x, 2, what);
  if (group == 0 || x.size(1) % group != 0) {
    throw DimensionError(std::string(what) + ": width " + std::to_string(x.size(1)) +
                         " is not a multiple of group " + std::to_string(group));
  }
}

}  // namespace

Tensor softmax_groups(const Tensor& x, std::size_t group) {
  check_groups(x, group, "softmax_groups");
  auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t base = 0; base < v.size(); base += group) {
    double m = v[base];
    for (std::size_t i = 1; i < group; ++i) m = std::max(m, v[base + i]);
    double z = 0.0;
    for (std::size_t i = 0; i < group; ++i) z += (out[base + i] = std::exp(v[base + i] - m));
    for (std::size_t i = 0; i < group; ++i) out[base + i] /= z;
  }
  return make_output(x.shape(), std::move(out), {x}, [group](detail::TensorImpl& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t base = 0; base < self.data.size(); base += group) {
      double dot = 0.0;
      for (std::size_t i = 0; i < group; ++i) dot += self.grad[base + i] * self.data[base + i];
      for (std::size_t i = 0; i < group; ++i) g[base + i] += self.data[base + i] * (self.grad[base + i] - dot);
    }
  });
}

Tensor log_softmax_groups(const Tensor& x, std::size_t group) {
  check_groups(x, group, "log_softmax_groups");
  auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t base = 0; base < v.size(); base += group) {
    double m = v[base];
    for (std::size_t i = 1; i < group; ++i) m = std::max(m, v[base + i]);
    double z = 0.0;
    for (std::size_t i = 0; i < group; ++i) z += std::exp(v[base + i] - m);
    const double lz = m + std::log(z);
    for (std::size_t i = 0; i < group; ++i) out[base + i] = v[base + i] - lz;
  }
  return make_output(x.shape(), std::move(out), {x}, [group](detail::TensorImpl& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t base = 0; base < self.data.size(); base += group) {
      double total = 0.0;
      for (std::size_t i = 0; i < group; ++i) total += self.grad[base + i];
      for (std::size_t i = 0; i < group; ++i) {
        g[base + i] += self.grad[base + i] - std::exp(self.data[base + i]) * total;
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 2, "softmax");
  return softmax_groups(x, x.size(1));
}

}  // namespace prognet::nn
