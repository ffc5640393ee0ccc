#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "bigr/nn/tape.hpp"
#include "bigr/wbce.hpp"

namespace bigr::nn {

namespace detail {

// The backward closure needs the output id, which is always the next slot.
template <class T, class F>
Var record(Tape<T>& tape, Matrix<T> value, std::initializer_list<Var> inputs, F&& make) {
  const Var out{tape.size()};
  return tape.record(std::move(value), inputs, make(out));
}

template <class T>
void check_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Internal,
          std::string("shape mismatch in ") + op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense algebra
// ---------------------------------------------------------------------------

template <class T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  require(tape.value(a).cols() == tape.value(b).rows(), ErrorKind::Internal, "matmul shape mismatch");
  Matrix<T> out = tape.value(a) * tape.value(b);
  return detail::record(tape, std::move(out), {a, b}, [&tape, a, b](Var o) {
    return [&tape, a, b, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(a)) tape.grad(a).noalias() += g * tape.value(b).transpose();
      if (tape.needs_grad(b)) tape.grad(b).noalias() += tape.value(a).transpose() * g;
    };
  });
}

// x * W + b, with W stored in x out and b a 1 x out row. `b` may be invalid.
template <class T>
Var linear(Tape<T>& tape, Var x, Var w, Var b = Var{}) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& wv = tape.value(w);
  require(xv.cols() == wv.rows(), ErrorKind::Internal, "linear shape mismatch");
  Matrix<T> out(xv.rows(), wv.cols());
  out.noalias() = xv * wv;
  if (b.valid()) out.rowwise() += tape.value(b).row(0);
  return detail::record(tape, std::move(out), {x, w, b}, [&tape, x, w, b](Var o) {
    return [&tape, x, w, b, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(x)) tape.grad(x).noalias() += g * tape.value(w).transpose();
      if (tape.needs_grad(w)) tape.grad(w).noalias() += tape.value(x).transpose() * g;
      if (tape.needs_grad(b)) tape.grad(b).row(0) += g.colwise().sum();
    };
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "add");
  Matrix<T> out = tape.value(a) + tape.value(b);
  return detail::record(tape, std::move(out), {a, b}, [&tape, a, b](Var o) {
    return [&tape, a, b, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(a)) tape.grad(a) += g;
      if (tape.needs_grad(b)) tape.grad(b) += g;
    };
  });
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "mul");
  Matrix<T> out = tape.value(a).cwiseProduct(tape.value(b));
  return detail::record(tape, std::move(out), {a, b}, [&tape, a, b](Var o) {
    return [&tape, a, b, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(a)) tape.grad(a) += g.cwiseProduct(tape.value(b));
      if (tape.needs_grad(b)) tape.grad(b) += g.cwiseProduct(tape.value(a));
    };
  });
}

template <class T>
Var scale(Tape<T>& tape, Var a, T s) {
  Matrix<T> out = tape.value(a) * s;
  return detail::record(tape, std::move(out), {a}, [&tape, a, s](Var o) {
    return [&tape, a, s, o]() { tape.grad(a) += tape.grad(o) * s; };
  });
}

// x has R*m rows; `tile` has R rows and is added to every block of R rows.
template <class T>
Var add_tiled(Tape<T>& tape, Var x, Var tile) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& tv = tape.value(tile);
  require(tv.cols() == xv.cols() && tv.rows() > 0 && xv.rows() % tv.rows() == 0,
          ErrorKind::Internal, "add_tiled shape mismatch");
  const Eigen::Index r = tv.rows();
  Matrix<T> out = xv;
  for (Eigen::Index b = 0; b < xv.rows() / r; ++b) out.middleRows(b * r, r) += tv;
  return detail::record(tape, std::move(out), {x, tile}, [&tape, x, tile, r](Var o) {
    return [&tape, x, tile, r, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(x)) tape.grad(x) += g;
      if (tape.needs_grad(tile)) {
        Matrix<T>& gt = tape.grad(tile);
        for (Eigen::Index b = 0; b < g.rows() / r; ++b) gt += g.middleRows(b * r, r);
      }
    };
  });
}

// y = x * (1 + scale[g]) + shift[g], with row i of x belonging to group i / group_rows.
template <class T>
Var modulate(Tape<T>& tape, Var x, Var shift, Var scale_v, int group_rows) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& sh = tape.value(shift);
  const Matrix<T>& sc = tape.value(scale_v);
  require(xv.rows() == sh.rows() * group_rows && sh.rows() == sc.rows() &&
              sh.cols() == xv.cols() && sc.cols() == xv.cols(),
          ErrorKind::Internal, "modulate shape mismatch");
  Matrix<T> out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const Eigen::Index g = i / group_rows;
    out.row(i) = xv.row(i).cwiseProduct((sc.row(g).array() + T(1)).matrix()) + sh.row(g);
  }
  return detail::record(tape, std::move(out), {x, shift, scale_v},
                        [&tape, x, shift, scale_v, group_rows](Var o) {
    return [&tape, x, shift, scale_v, group_rows, o]() {
      const Matrix<T>& g = tape.grad(o);
      const Matrix<T>& xv = tape.value(x);
      const Matrix<T>& sc = tape.value(scale_v);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const Eigen::Index k = i / group_rows;
        if (tape.needs_grad(x)) {
          tape.grad(x).row(i) += g.row(i).cwiseProduct((sc.row(k).array() + T(1)).matrix());
        }
        if (tape.needs_grad(shift)) tape.grad(shift).row(k) += g.row(i);
        if (tape.needs_grad(scale_v)) tape.grad(scale_v).row(k) += g.row(i).cwiseProduct(xv.row(i));
      }
    };
  });
}

// out = x + gate[g] * y, grouped like modulate.
template <class T>
Var gated_add(Tape<T>& tape, Var x, Var y, Var gate, int group_rows) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& yv = tape.value(y);
  const Matrix<T>& gv = tape.value(gate);
  detail::check_same_shape(xv, yv, "gated_add");
  require(xv.rows() == gv.rows() * group_rows && gv.cols() == xv.cols(), ErrorKind::Internal,
          "gated_add shape mismatch");
  Matrix<T> out = xv;
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    out.row(i) += yv.row(i).cwiseProduct(gv.row(i / group_rows));
  }
  return detail::record(tape, std::move(out), {x, y, gate}, [&tape, x, y, gate, group_rows](Var o) {
    return [&tape, x, y, gate, group_rows, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(x)) tape.grad(x) += g;
      const Matrix<T>& yv = tape.value(y);
      const Matrix<T>& gv = tape.value(gate);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const Eigen::Index k = i / group_rows;
        if (tape.needs_grad(y)) tape.grad(y).row(i) += g.row(i).cwiseProduct(gv.row(k));
        if (tape.needs_grad(gate)) tape.grad(gate).row(k) += g.row(i).cwiseProduct(yv.row(i));
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Normalization and activations
// ---------------------------------------------------------------------------

// Row-wise layer norm without affine parameters (modulation supplies them).
template <class T>
Var layer_norm(Tape<T>& tape, Var x, T eps = T(1e-6)) {
  const Matrix<T>& xv = tape.value(x);
  const Eigen::Index d = xv.cols();
  Matrix<T> out(xv.rows(), d);
  auto inv_std = std::make_shared<std::vector<T>>(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const T mean = xv.row(i).mean();
    const T var = (xv.row(i).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    out.row(i) = (xv.row(i).array() - mean) * is;
  }
  return detail::record(tape, std::move(out), {x}, [&tape, x, inv_std](Var o) {
    return [&tape, x, inv_std, o]() {
      const Matrix<T>& g = tape.grad(o);
      const Matrix<T>& xhat = tape.value(o);
      Matrix<T>& gx = tape.grad(x);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const T mg = g.row(i).mean();
        const T mgx = g.row(i).cwiseProduct(xhat.row(i)).mean();
        gx.row(i).array() += (*inv_std)[i] * (g.row(i).array() - mg - xhat.row(i).array() * mgx);
      }
    };
  });
}

template <class T>
Var gelu(Tape<T>& tape, Var x) {
  constexpr T c = T(0.7978845608028654);
  constexpr T a = T(0.044715);
  const Matrix<T>& xv = tape.value(x);
  Matrix<T> out = xv.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); });
  return detail::record(tape, std::move(out), {x}, [&tape, x](Var o) {
    return [&tape, x, o]() {
      const Matrix<T>& xv = tape.value(x);
      const Matrix<T> d = xv.unaryExpr([](T v) {
        const T th = std::tanh(c * (v + a * v * v * v));
        return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * a * v * v);
      });
      tape.grad(x) += tape.grad(o).cwiseProduct(d);
    };
  });
}

template <class T>
Var silu(Tape<T>& tape, Var x) {
  const Matrix<T>& xv = tape.value(x);
  Matrix<T> out = xv.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
  return detail::record(tape, std::move(out), {x}, [&tape, x](Var o) {
    return [&tape, x, o]() {
      const Matrix<T> d = tape.value(x).unaryExpr([](T v) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
      tape.grad(x) += tape.grad(o).cwiseProduct(d);
    };
  });
}

template <class T>
Var tanh(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).array().tanh().matrix();
  return detail::record(tape, std::move(out), {x}, [&tape, x](Var o) {
    return [&tape, o, x]() {
      const Matrix<T>& y = tape.value(o);
      tape.grad(x).array() += tape.grad(o).array() * (T(1) - y.array().square());
    };
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).cwiseMax(T(0));
  return detail::record(tape, std::move(out), {x}, [&tape, x](Var o) {
    return [&tape, x, o]() {
      const Matrix<T>& xv = tape.value(x);
      tape.grad(x) += tape.grad(o).cwiseProduct(
          xv.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    };
  });
}

// Forward: +1 where x > 0, -1 otherwise. Backward: identity (straight-through).
template <class T>
Var sign_straight_through(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).unaryExpr([](T v) { return v > T(0) ? T(1) : T(-1); });
  return detail::record(tape, std::move(out), {x}, [&tape, x](Var o) {
    return [&tape, x, o]() { tape.grad(x) += tape.grad(o); };
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// Full bidirectional multi-head attention core. q, k, v hold `batch * seq`
// rows of width d = heads * head_dim; no causal mask is applied.
template <class T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, int seq, int heads) {
  const Matrix<T>& qv = tape.value(q);
  const Matrix<T>& kv = tape.value(k);
  const Matrix<T>& vv = tape.value(v);
  const int d = static_cast<int>(qv.cols());
  require(d % heads == 0 && qv.rows() % seq == 0, ErrorKind::Internal, "attention shape mismatch");
  detail::check_same_shape(qv, kv, "attention");
  detail::check_same_shape(qv, vv, "attention");
  const int dh = d / heads;
  const int batch = static_cast<int>(qv.rows() / seq);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<std::vector<Matrix<T>>>(static_cast<std::size_t>(batch) * heads);
  Matrix<T> out(qv.rows(), d);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      Matrix<T> s = (qv.block(b * seq, h * dh, seq, dh) * kv.block(b * seq, h * dh, seq, dh).transpose()) * inv_sqrt;
      for (int i = 0; i < seq; ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * seq, h * dh, seq, dh).noalias() = s * vv.block(b * seq, h * dh, seq, dh);
      (*probs)[static_cast<std::size_t>(b) * heads + h] = std::move(s);
    }
  }
  return detail::record(tape, std::move(out), {q, k, v}, [&tape, q, k, v, seq, heads, probs, inv_sqrt](Var o) {
    return [&tape, q, k, v, seq, heads, probs, inv_sqrt, o]() {
      const Matrix<T>& g = tape.grad(o);
      const Matrix<T>& qv = tape.value(q);
      const Matrix<T>& kv = tape.value(k);
      const Matrix<T>& vv = tape.value(v);
      const int d = static_cast<int>(qv.cols());
      const int dh = d / heads;
      const int batch = static_cast<int>(qv.rows() / seq);
      for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
          const Matrix<T>& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
          const auto go = g.block(b * seq, h * dh, seq, dh);
          if (tape.needs_grad(v)) {
            tape.grad(v).block(b * seq, h * dh, seq, dh).noalias() += p.transpose() * go;
          }
          Matrix<T> dp = go * vv.block(b * seq, h * dh, seq, dh).transpose();
          Matrix<T> ds(seq, seq);
          for (int i = 0; i < seq; ++i) {
            const T dot = dp.row(i).dot(p.row(i));
            ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
          }
          ds *= inv_sqrt;
          if (tape.needs_grad(q)) {
            tape.grad(q).block(b * seq, h * dh, seq, dh).noalias() += ds * kv.block(b * seq, h * dh, seq, dh);
          }
          if (tape.needs_grad(k)) {
            tape.grad(k).block(b * seq, h * dh, seq, dh).noalias() +=
                ds.transpose() * qv.block(b * seq, h * dh, seq, dh);
          }
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Row / column plumbing
// ---------------------------------------------------------------------------

template <class T>
Var gather_rows(Tape<T>& tape, Var x, std::vector<int> rows) {
  const Matrix<T>& xv = tape.value(x);
  Matrix<T> out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < xv.rows(), ErrorKind::Internal, "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(rows));
  return detail::record(tape, std::move(out), {x}, [&tape, x, idx](Var o) {
    return [&tape, x, idx, o]() {
      const Matrix<T>& g = tape.grad(o);
      Matrix<T>& gx = tape.grad(x);
      for (std::size_t i = 0; i < idx->size(); ++i) gx.row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  });
}

// Rows i with replace[i] != 0 are overwritten by the single row `row`.
template <class T>
Var replace_rows(Tape<T>& tape, Var x, std::vector<std::uint8_t> replace, Var row) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& rv = tape.value(row);
  require(rv.rows() == 1 && rv.cols() == xv.cols() &&
              static_cast<Eigen::Index>(replace.size()) == xv.rows(),
          ErrorKind::Internal, "replace_rows shape mismatch");
  Matrix<T> out = xv;
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    if (replace[static_cast<std::size_t>(i)]) out.row(i) = rv.row(0);
  }
  auto mask = std::make_shared<std::vector<std::uint8_t>>(std::move(replace));
  return detail::record(tape, std::move(out), {x, row}, [&tape, x, row, mask](Var o) {
    return [&tape, x, row, mask, o]() {
      const Matrix<T>& g = tape.grad(o);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if ((*mask)[static_cast<std::size_t>(i)]) {
          if (tape.needs_grad(row)) tape.grad(row).row(0) += g.row(i);
        } else if (tape.needs_grad(x)) {
          tape.grad(x).row(i) += g.row(i);
        }
      }
    };
  });
}

// Interleaves one head row per group in front of each block of `body_rows`
// rows: [head_0, body_0.., head_1, body_1.., ...].
template <class T>
Var prepend_rows(Tape<T>& tape, Var head, Var body, int body_rows) {
  const Matrix<T>& hv = tape.value(head);
  const Matrix<T>& bv = tape.value(body);
  require(hv.cols() == bv.cols() && bv.rows() == hv.rows() * body_rows, ErrorKind::Internal,
          "prepend_rows shape mismatch");
  const Eigen::Index groups = hv.rows();
  const Eigen::Index stride = body_rows + 1;
  Matrix<T> out(groups * stride, hv.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    out.row(g * stride) = hv.row(g);
    out.middleRows(g * stride + 1, body_rows) = bv.middleRows(g * body_rows, body_rows);
  }
  return detail::record(tape, std::move(out), {head, body}, [&tape, head, body, body_rows](Var o) {
    return [&tape, head, body, body_rows, o]() {
      const Matrix<T>& g = tape.grad(o);
      const Eigen::Index stride = body_rows + 1;
      const Eigen::Index groups = g.rows() / stride;
      for (Eigen::Index k = 0; k < groups; ++k) {
        if (tape.needs_grad(head)) tape.grad(head).row(k) += g.row(k * stride);
        if (tape.needs_grad(body)) {
          tape.grad(body).middleRows(k * body_rows, body_rows) += g.middleRows(k * stride + 1, body_rows);
        }
      }
    };
  });
}

template <class T>
Var slice_cols(Tape<T>& tape, Var x, int start, int count) {
  const Matrix<T>& xv = tape.value(x);
  require(start >= 0 && start + count <= xv.cols(), ErrorKind::Internal, "slice_cols out of range");
  Matrix<T> out = xv.middleCols(start, count);
  return detail::record(tape, std::move(out), {x}, [&tape, x, start, count](Var o) {
    return [&tape, x, start, count, o]() { tape.grad(x).middleCols(start, count) += tape.grad(o); };
  });
}

// ---------------------------------------------------------------------------
// Losses and reductions (all return 1 x 1)
// ---------------------------------------------------------------------------

template <class T>
Var mse_loss(Tape<T>& tape, Var x, const Matrix<T>& target) {
  const Matrix<T>& xv = tape.value(x);
  detail::check_same_shape(xv, target, "mse_loss");
  auto diff = std::make_shared<Matrix<T>>(xv - target);
  Matrix<T> out(1, 1);
  out(0, 0) = diff->squaredNorm() / static_cast<T>(diff->size());
  return detail::record(tape, std::move(out), {x}, [&tape, x, diff](Var o) {
    return [&tape, x, diff, o]() {
      const T g = tape.grad(o)(0, 0);
      tape.grad(x) += (*diff) * (T(2) * g / static_cast<T>(diff->size()));
    };
  });
}

// sum(x .* weights); handy for probing gradients with an arbitrary cotangent.
template <class T>
Var weighted_sum(Tape<T>& tape, Var x, const Matrix<T>& weights) {
  detail::check_same_shape(tape.value(x), weights, "weighted_sum");
  Matrix<T> out(1, 1);
  out(0, 0) = tape.value(x).cwiseProduct(weights).sum();
  auto w = std::make_shared<Matrix<T>>(weights);
  return detail::record(tape, std::move(out), {x}, [&tape, x, w](Var o) {
    return [&tape, x, w, o]() { tape.grad(x) += (*w) * tape.grad(o)(0, 0); };
  });
}

// Weighted binary cross-entropy on logits, averaged over rows. Each row is one
// K-bit code; per-bit weights rebalance the 0/1 ratio of that row's target.
// Probabilities are clamped to [eps, 1 - eps]; inside the clamp the gradient
// is the usual w * (p - y) / K, outside it is zero.
template <class T>
Var wbce_with_logits(Tape<T>& tape, Var logits, const Matrix<T>& targets, double eps = 1e-7) {
  const Matrix<T>& lv = tape.value(logits);
  detail::check_same_shape(lv, targets, "wbce_with_logits");
  const Eigen::Index rows = lv.rows();
  const Eigen::Index k = lv.cols();
  auto dlogits = std::make_shared<Matrix<T>>(rows, k);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    total += wbce_row(lv.row(r).data(), targets.row(r).data(), static_cast<int>(k), eps, dlogits->row(r).data());
  }
  Matrix<T> out(1, 1);
  out(0, 0) = static_cast<T>(rows > 0 ? total / static_cast<double>(rows) : 0.0);
  const T inv_rows = rows > 0 ? T(1) / static_cast<T>(rows) : T(0);
  return detail::record(tape, std::move(out), {logits}, [&tape, logits, dlogits, inv_rows](Var o) {
    return [&tape, logits, dlogits, inv_rows, o]() {
      tape.grad(logits) += (*dlogits) * (tape.grad(o)(0, 0) * inv_rows);
    };
  });
}

// ---------------------------------------------------------------------------
// Convolutions (NHWC rows: one row per pixel, one column per channel)
// ---------------------------------------------------------------------------

struct ConvShape {
  int batch = 1;
  int height = 0;    // spatial size of the larger ("image") side
  int width = 0;
  int channels = 0;  // channels of the image side
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  int patch() const { return kernel * kernel * channels; }
};

// (batch*H*W x C) -> (batch*Ho*Wo x k*k*C), patch order (ky, kx, c).
template <class T>
Matrix<T> im2col(const Matrix<T>& img, const ConvShape& s) {
  const int ho = s.out_height();
  const int wo = s.out_width();
  Matrix<T> cols = Matrix<T>::Zero(static_cast<Eigen::Index>(s.batch) * ho * wo, s.patch());
  for (int b = 0; b < s.batch; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(b) * ho + oy) * wo + ox;
        T* dst = cols.row(row).data();
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            const T* src = img.row((static_cast<Eigen::Index>(b) * s.height + iy) * s.width + ix).data();
            std::copy(src, src + s.channels, dst + (ky * s.kernel + kx) * s.channels);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds patch columns back onto the image.
template <class T>
void col2im_add(const Matrix<T>& cols, const ConvShape& s, Matrix<T>& img) {
  const int ho = s.out_height();
  const int wo = s.out_width();
  for (int b = 0; b < s.batch; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(b) * ho + oy) * wo + ox;
        const T* src = cols.row(row).data();
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            T* dst = img.row((static_cast<Eigen::Index>(b) * s.height + iy) * s.width + ix).data();
            const T* p = src + (ky * s.kernel + kx) * s.channels;
            for (int c = 0; c < s.channels; ++c) dst[c] += p[c];
          }
        }
      }
    }
  }
}

// Strided convolution. `shape` describes the input; w is (k*k*Cin x Cout).
template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, ConvShape shape) {
  const Matrix<T>& xv = tape.value(x);
  require(xv.rows() == static_cast<Eigen::Index>(shape.batch) * shape.height * shape.width &&
              xv.cols() == shape.channels && tape.value(w).rows() == shape.patch(),
          ErrorKind::Internal, "conv2d shape mismatch");
  auto cols = std::make_shared<Matrix<T>>(im2col(xv, shape));
  Matrix<T> out = (*cols) * tape.value(w);
  if (b.valid()) out.rowwise() += tape.value(b).row(0);
  return detail::record(tape, std::move(out), {x, w, b}, [&tape, x, w, b, shape, cols](Var o) {
    return [&tape, x, w, b, shape, cols, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(w)) tape.grad(w).noalias() += cols->transpose() * g;
      if (tape.needs_grad(b)) tape.grad(b).row(0) += g.colwise().sum();
      if (tape.needs_grad(x)) {
        Matrix<T> dcols = g * tape.value(w).transpose();
        col2im_add(dcols, shape, tape.grad(x));
      }
    };
  });
}

// Transposed convolution, the adjoint of conv2d. `shape` describes the
// (larger) output image; x has batch*Ho*Wo rows where Ho/Wo are
// shape.out_height()/out_width(). w is (Cin x k*k*Cout).
template <class T>
Var conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, ConvShape shape) {
  const Matrix<T>& xv = tape.value(x);
  require(xv.rows() == static_cast<Eigen::Index>(shape.batch) * shape.out_height() * shape.out_width() &&
              tape.value(w).rows() == xv.cols() && tape.value(w).cols() == shape.patch(),
          ErrorKind::Internal, "conv_transpose2d shape mismatch");
  Matrix<T> cols = xv * tape.value(w);
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(shape.batch) * shape.height * shape.width,
                                  shape.channels);
  col2im_add(cols, shape, out);
  if (b.valid()) out.rowwise() += tape.value(b).row(0);
  return detail::record(tape, std::move(out), {x, w, b}, [&tape, x, w, b, shape](Var o) {
    return [&tape, x, w, b, shape, o]() {
      const Matrix<T>& g = tape.grad(o);
      if (tape.needs_grad(b)) tape.grad(b).row(0) += g.colwise().sum();
      if (!tape.needs_grad(x) && !tape.needs_grad(w)) return;
      const Matrix<T> dcols = im2col(g, shape);
      if (tape.needs_grad(w)) tape.grad(w).noalias() += tape.value(x).transpose() * dcols;
      if (tape.needs_grad(x)) tape.grad(x).noalias() += dcols * tape.value(w).transpose();
    };
  });
}

}  // namespace bigr::nn
