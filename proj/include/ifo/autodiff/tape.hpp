#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ifo/autodiff/tensor.hpp"
#include "ifo/error.hpp"
#include "ifo/random.hpp"

namespace ifo::ad {

namespace detail {

// C += op(A) * op(B), op(A) is m x k, op(B) is k x n, all row-major.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c) {
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[i * n + j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
    }
  }
}

struct MatDims {
  std::size_t m, n, k;
};

inline MatDims product_dims(const Shape& a, const Shape& b, bool trans_a, bool trans_b,
                            std::size_t offset) {
  const std::size_t ar = a[offset], ac = a[offset + 1];
  const std::size_t br = b[offset], bc = b[offset + 1];
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t ka = trans_a ? ar : ac;
  const std::size_t kb = trans_b ? bc : br;
  const std::size_t n = trans_b ? br : bc;
  if (ka != kb) {
    throw DimensionError("matmul inner dimensions disagree: " + to_string(a) +
                         (trans_a ? "^T" : "") + " x " + to_string(b) + (trans_b ? "^T" : ""));
  }
  return {m, n, ka};
}

}  // namespace detail

/// Records differentiable operations in execution order and replays their
/// local backward rules in reverse.
///
/// Parameters are leaf tensors with requires_grad set; their gradients
/// accumulate across backward() calls until zero_grad(). Intermediate
/// gradients are reset at the start of every backward() call. A tape built
/// with record = false computes forward values only.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// op(a) * op(b) for rank-2 tensors.
  Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false) {
    if (a.rank() != 2 || b.rank() != 2) {
      throw DimensionError("matmul expects rank-2 operands, got " + to_string(a.shape()) +
                           " and " + to_string(b.shape()));
    }
    const auto d = detail::product_dims(a.shape(), b.shape(), trans_a, trans_b, 0);
    Tensor out = make_output({d.m, d.n}, {a, b});
    detail::gemm(trans_a, trans_b, d.m, d.n, d.k, a.data().data(), b.data().data(),
                 out.data().data());
    if (out.requires_grad()) {
      record(out, [a = a, b = b, out, d, trans_a, trans_b]() mutable {
        auto dc = out.grad();
        if (a.requires_grad()) {
          if (!trans_a) {
            detail::gemm(false, !trans_b, d.m, d.k, d.n, dc.data(), b.data().data(),
                         a.grad().data());
          } else {
            detail::gemm(trans_b, true, d.k, d.m, d.n, b.data().data(), dc.data(),
                         a.grad().data());
          }
        }
        if (b.requires_grad()) {
          if (!trans_b) {
            detail::gemm(!trans_a, false, d.k, d.n, d.m, a.data().data(), dc.data(),
                         b.grad().data());
          } else {
            detail::gemm(true, trans_a, d.n, d.k, d.m, dc.data(), a.data().data(),
                         b.grad().data());
          }
        }
      });
    }
    return out;
  }

  /// Batched op(a[i]) * op(b[i]) for rank-3 tensors with equal leading extent.
  Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
      throw DimensionError("bmm expects rank-3 operands with equal batch, got " +
                           to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    const std::size_t batch = a.dim(0);
    const auto d = detail::product_dims(a.shape(), b.shape(), trans_a, trans_b, 1);
    Tensor out = make_output({batch, d.m, d.n}, {a, b});
    const std::size_t a_stride = a.dim(1) * a.dim(2);
    const std::size_t b_stride = b.dim(1) * b.dim(2);
    const std::size_t c_stride = d.m * d.n;
    for (std::size_t s = 0; s < batch; ++s) {
      detail::gemm(trans_a, trans_b, d.m, d.n, d.k, a.data().data() + s * a_stride,
                   b.data().data() + s * b_stride, out.data().data() + s * c_stride);
    }
    if (out.requires_grad()) {
      record(out, [a = a, b = b, out, d, batch, a_stride, b_stride, c_stride, trans_a,
                   trans_b]() mutable {
        auto dc = out.grad();
        for (std::size_t s = 0; s < batch; ++s) {
          const double* dcs = dc.data() + s * c_stride;
          const double* as = a.data().data() + s * a_stride;
          const double* bs = b.data().data() + s * b_stride;
          if (a.requires_grad()) {
            double* das = a.grad().data() + s * a_stride;
            if (!trans_a) {
              detail::gemm(false, !trans_b, d.m, d.k, d.n, dcs, bs, das);
            } else {
              detail::gemm(trans_b, true, d.k, d.m, d.n, bs, dcs, das);
            }
          }
          if (b.requires_grad()) {
            double* dbs = b.grad().data() + s * b_stride;
            if (!trans_b) {
              detail::gemm(!trans_a, false, d.k, d.n, d.m, as, dcs, dbs);
            } else {
              detail::gemm(true, trans_a, d.n, d.k, d.m, dcs, as, dbs);
            }
          }
        }
      });
    }
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
      throw DimensionError("add shape mismatch: " + to_string(a.shape()) + " vs " +
                           to_string(b.shape()));
    }
    Tensor out = make_output(a.shape(), {a, b});
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    if (out.requires_grad()) {
      record(out, [a = a, b = b, out]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) accumulate(a.grad(), g);
        if (b.requires_grad()) accumulate(b.grad(), g);
      });
    }
    return out;
  }

  /// x[m x n] + bias[n], broadcast over rows.
  Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.size() != x.dim(1)) {
      throw DimensionError("add_bias shape mismatch: " + to_string(x.shape()) + " vs " +
                           to_string(bias.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor out = make_output(x.shape(), {x, bias});
    auto o = out.data();
    auto xv = x.data();
    auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = xv[r * cols + c] + bv[c];
    }
    if (out.requires_grad()) {
      record(out, [x = x, bias = bias, out, rows, cols]() mutable {
        auto g = out.grad();
        if (x.requires_grad()) accumulate(x.grad(), g);
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
          }
        }
      });
    }
    return out;
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
      throw DimensionError("mul shape mismatch: " + to_string(a.shape()) + " vs " +
                           to_string(b.shape()));
    }
    Tensor out = make_output(a.shape(), {a, b});
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
      record(out, [a = a, b = b, out]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
        }
      });
    }
    return out;
  }

  /// s * x where s is a one-element tensor (e.g. a learnable gate).
  Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) {
      throw DimensionError("mul_scalar expects a one-element factor, got " + to_string(s.shape()));
    }
    Tensor out = make_output(x.shape(), {x, s});
    const double sv = s.data()[0];
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = sv * xv[i];
    if (out.requires_grad()) {
      record(out, [x = x, s = s, out]() mutable {
        auto g = out.grad();
        const double sv = s.data()[0];
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
        }
        if (s.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.data()[i];
          s.grad()[0] += acc;
        }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& x, double factor) {
    Tensor out = make_output(x.shape(), {x});
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x.data()[i];
    if (out.requires_grad()) {
      record(out, [x = x, out, factor]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
      });
    }
    return out;
  }

  Tensor leaky_relu(const Tensor& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
      throw ContractError("leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
    }
    Tensor out = make_output(x.shape(), {x});
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
    if (out.requires_grad()) {
      record(out, [x = x, out, slope]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
      });
    }
    return out;
  }

  /// Softmax along `axis`, stabilized by subtracting the slice maximum.
  Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
      throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for shape " +
                           to_string(x.shape()));
    }
    const auto [outer, len, inner] = split_axis(x.shape(), axis);
    Tensor out = make_output(x.shape(), {x});
    auto xv = x.data();
    auto y = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, xv[base + t * inner]);
        double total = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          const double e = std::exp(xv[base + t * inner] - mx);
          y[base + t * inner] = e;
          total += e;
        }
        const double inv = 1.0 / total;
        for (std::size_t t = 0; t < len; ++t) y[base + t * inner] *= inv;
      }
    }
    if (out.requires_grad()) {
      record(out, [x = x, out, outer, len, inner]() mutable {
        auto g = out.grad();
        auto y = out.data();
        auto gx = x.grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) dot += g[base + t * inner] * y[base + t * inner];
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t idx = base + t * inner;
              gx[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
    }
    return out;
  }

  /// Mean over the batch of -log softmax(logits)[label].
  Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
      throw DimensionError("cross_entropy expects logits [batch x K] with one label per row, got " +
                           to_string(logits.shape()) + " and " + std::to_string(labels.size()) +
                           " labels");
    }
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    for (int label : labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= classes) {
        throw IndexError("label " + std::to_string(label) + " outside [0, " +
                         std::to_string(classes) + ")");
      }
    }
    std::vector<double> probs(batch * classes);
    auto z = logits.data();
    double loss = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
      const double* row = z.data() + r * classes;
      const double mx = *std::max_element(row, row + classes);
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += std::exp(row[c] - mx);
      const double log_total = std::log(total);
      for (std::size_t c = 0; c < classes; ++c) {
        probs[r * classes + c] = std::exp(row[c] - mx - log_total);
      }
      loss -= row[labels[r]] - mx - log_total;
    }
    Tensor out = make_output({1}, {logits});
    out.data()[0] = loss / static_cast<double>(batch);
    if (out.requires_grad()) {
      std::vector<int> owned(labels.begin(), labels.end());
      record(out, [logits = logits, out, probs = std::move(probs), owned = std::move(owned), batch,
                   classes]() mutable {
        const double g = out.grad()[0] / static_cast<double>(batch);
        auto gz = logits.grad();
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double target = static_cast<std::size_t>(owned[r]) == c ? 1.0 : 0.0;
            gz[r * classes + c] += g * (probs[r * classes + c] - target);
          }
        }
      });
    }
    return out;
  }

  Tensor reshape(const Tensor& x, Shape shape) {
    if (element_count(shape) != x.size()) {
      throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
    }
    Tensor out = make_output(std::move(shape), {x});
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    if (out.requires_grad()) {
      record(out, [x = x, out]() mutable { accumulate(x.grad(), out.grad()); });
    }
    return out;
  }

  Tensor sum(const Tensor& x) {
    Tensor out = make_output({1}, {x});
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    out.data()[0] = acc;
    if (out.requires_grad()) {
      record(out, [x = x, out]() mutable {
        const double g = out.grad()[0];
        for (double& gx : x.grad()) gx += g;
      });
    }
    return out;
  }

  /// Inverted dropout: zeroes entries with probability `rate` and rescales the
  /// survivors by 1 / (1 - rate). Identity when `training` is false.
  Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return scale(x, 1.0);
    std::vector<double> mask(x.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = make_output(x.shape(), {x});
    for (std::size_t i = 0; i < mask.size(); ++i) out.data()[i] = x.data()[i] * mask[i];
    if (out.requires_grad()) {
      record(out, [x = x, out, mask = std::move(mask)]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
      });
    }
    return out;
  }

  /// Reverse pass from a one-element loss. Leaf gradients accumulate.
  void backward(Tensor loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    for (auto& node : nodes_) node.output.zero_grad();
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output.has_grad()) it->backward();
    }
  }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };

  struct AxisSplit {
    std::size_t outer, len, inner;
  };

  static AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    return {outer, shape[axis], inner};
  }

  static void accumulate(std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  Tensor make_output(Shape shape, std::initializer_list<Tensor> inputs) const {
    bool grad = false;
    if (record_) {
      for (const auto& t : inputs) grad = grad || t.requires_grad();
    }
    return Tensor::zeros(std::move(shape), grad);
  }

  void record(const Tensor& out, std::function<void()> rule) {
    nodes_.push_back(Node{out, std::move(rule)});
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace ifo::ad
