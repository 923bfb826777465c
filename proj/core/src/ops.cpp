#include "kanforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "kanforge/error.hpp"

namespace kanforge {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i > 1; --i) strides[i - 2] = strides[i - 1] * shape[i - 1];
  return strides;
}

// Strides of `in` when viewed with the broadcast shape `out`: zero on
// broadcast axes, and on the leading axes `in` lacks.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  const auto own = contiguous_strides(in);
  const std::size_t lead = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    strides[lead + i] = in[i] == 1 ? 0 : own[i];
  }
  return strides;
}

// Calls fn(out_index, a_offset, b_offset) for every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = shape_numel(out);
  const std::size_t rank = out.size();
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  const std::size_t last = rank - 1;
  const std::size_t inner = out[last];
  for (std::size_t i = 0; i < n;) {
    for (std::size_t j = 0; j < inner; ++j, ++i) {
      fn(i, ia + j * sa[last], ib + j * sb[last]);
    }
    // advance the odometer over the leading axes
    for (std::size_t ax = last; ax-- > 0;) {
      ++counter[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (counter[ax] < out[ax]) break;
      ia -= sa[ax] * counter[ax];
      ib -= sb[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply_unary(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::Neg: return -x;
    case UnaryOp::Exp: return std::exp(x);
    case UnaryOp::Sin: return std::sin(x);
    case UnaryOp::Cos: return std::cos(x);
    case UnaryOp::Arctan: return std::atan(x);
    case UnaryOp::Silu: return x * sigmoid(x);
    case UnaryOp::Relu: return x > 0 ? x : 0.0;
    case UnaryOp::Square: return x * x;
    case UnaryOp::Sqrt: return std::sqrt(x);
  }
  return 0.0;
}

// d op(x) / dx given input x and output y.
double unary_derivative(UnaryOp op, double x, double y) {
  switch (op) {
    case UnaryOp::Neg: return -1.0;
    case UnaryOp::Exp: return y;
    case UnaryOp::Sin: return std::cos(x);
    case UnaryOp::Cos: return -std::sin(x);
    case UnaryOp::Arctan: return 1.0 / (1.0 + x * x);
    case UnaryOp::Silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case UnaryOp::Relu: return x > 0 ? 1.0 : 0.0;
    case UnaryOp::Square: return 2.0 * x;
    case UnaryOp::Sqrt: return 0.5 / y;
  }
  return 0.0;
}

void check_axis(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(a.shape()));
  }
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_to_string(a) + " and " + shape_to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = apply_unary(op, in[i]);
  Tensor result = make_result(a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [op, ai, oi] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < oi->data.size(); ++i) {
        ai->grad[i] += oi->grad[i] * unary_derivative(op, ai->data[i], oi->data[i]);
      }
    });
  }
  return result;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(shape_numel(out_shape));
  auto compute = [&](auto f) {
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i], db[i]);
    } else {
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(da[ia], db[ib]); });
    }
  };
  switch (op) {
    case BinaryOp::Add: compute([](double x, double y) { return x + y; }); break;
    case BinaryOp::Sub: compute([](double x, double y) { return x - y; }); break;
    case BinaryOp::Mul: compute([](double x, double y) { return x * y; }); break;
    case BinaryOp::Div: compute([](double x, double y) { return x / y; }); break;
  }
  Tensor result = make_result(out_shape, std::move(out), {&a, &b});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    Tape::current().record(result, [op, ai, bi, oi, sa, sb] {
      const bool ga = ai->requires_grad;
      const bool gb = bi->requires_grad;
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      for_each_broadcast(oi->shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        const double g = oi->grad[i];
        const double x = ai->data[ia];
        const double y = bi->data[ib];
        switch (op) {
          case BinaryOp::Add:
            if (ga) ai->grad[ia] += g;
            if (gb) bi->grad[ib] += g;
            break;
          case BinaryOp::Sub:
            if (ga) ai->grad[ia] += g;
            if (gb) bi->grad[ib] -= g;
            break;
          case BinaryOp::Mul:
            if (ga) ai->grad[ia] += g * y;
            if (gb) bi->grad[ib] += g * x;
            break;
          case BinaryOp::Div:
            if (ga) ai->grad[ia] += g / y;
            if (gb) bi->grad[ib] -= g * x / (y * y);
            break;
        }
      });
    });
  }
  return result;
}

Tensor affine(const Tensor& a, double scale, double shift) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * scale + shift;
  Tensor result = make_result(a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [scale, ai, oi] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * scale;
    });
  }
  return result;
}

namespace {

// C[m x n] += A[m x k] . B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double dot(const double* a, const double* b, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  for (; p < k; ++p) s0 += a[p] * b[p];
  return (s0 + s1) + (s2 + s3);
}

// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (n < 8) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
    }
    return;
  }
  // transpose B once so the inner loop runs over contiguous memory
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(a, bt.data(), c, m, k, n);
}

// C[k x n] += A[m x k]^T . B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_matrix(const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    throw ShapeError(std::string("matmul operand ") + name + " must be 2-D, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "a");
  require_matrix(b, "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " . " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor result = make_result({m, n}, std::move(out), {&a, &b});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    Tape::current().record(result, [ai, bi, oi, m, k, n] {
      if (ai->requires_grad) {  // dA = dC . B^T
        ai->ensure_grad();
        gemm_nt(oi->grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
      }
      if (bi->requires_grad) {  // dB = A^T . dC
        bi->ensure_grad();
        gemm_tn(ai->data.data(), oi->grad.data(), bi->grad.data(), m, k, n);
      }
    });
  }
  return result;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix(a, "a");
  require_matrix(b, "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " . " +
                     shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor result = make_result({m, n}, std::move(out), {&a, &b});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    Tape::current().record(result, [ai, bi, oi, m, k, n] {
      if (ai->requires_grad) {  // dA = dC . B
        ai->ensure_grad();
        gemm_nn(oi->grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
      }
      if (bi->requires_grad) {  // dB = dC^T . A
        bi->ensure_grad();
        const auto zeros = static_cast<std::size_t>(std::count(ai->data.begin(), ai->data.end(), 0.0));
        if (4 * zeros >= ai->data.size()) {
          // sparse A (spline bases): accumulate A^T . dC skipping zeros, then transpose
          std::vector<double> t(k * n, 0.0);
          gemm_tn(ai->data.data(), oi->grad.data(), t.data(), m, k, n);
          for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) bi->grad[j * k + p] += t[p * n + j];
          }
        } else {
          gemm_tn(oi->grad.data(), ai->data.data(), bi->grad.data(), m, n, k);
        }
      }
    });
  }
  return result;
}

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis) {
  check_axis(a, axis);
  const Shape& in = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t n = in[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (i != axis) out_shape.push_back(in[i]);
  }
  const auto d = a.data();
  std::vector<double> out(outer * inner);
  std::vector<std::size_t> argmax;
  if (op == ReduceOp::Max) argmax.resize(out.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      double acc = op == ReduceOp::Max ? d[base] : 0.0;
      std::size_t best = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const double v = d[base + r * inner];
        if (op == ReduceOp::Max) {
          if (v > acc) {  // strict: the first maximum wins ties
            acc = v;
            best = r;
          }
        } else {
          acc += v;
        }
      }
      if (op == ReduceOp::Mean) acc /= static_cast<double>(n);
      out[o * inner + j] = acc;
      if (op == ReduceOp::Max) argmax[o * inner + j] = best;
    }
  }
  Tensor result = make_result(out_shape, std::move(out), {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [op, ai, oi, outer, inner, n, argmax = std::move(argmax)] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      const double scale = op == ReduceOp::Mean ? 1.0 / static_cast<double>(n) : 1.0;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < inner; ++j) {
          const double g = oi->grad[o * inner + j];
          const std::size_t base = o * n * inner + j;
          if (op == ReduceOp::Max) {
            ai->grad[base + argmax[o * inner + j] * inner] += g;
          } else {
            for (std::size_t r = 0; r < n; ++r) ai->grad[base + r * inner] += g * scale;
          }
        }
      }
    });
  }
  return result;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor result = make_result({}, {acc}, {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [ai, oi] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      for (double& g : ai->grad) g += oi->grad[0];
    });
  }
  return result;
}

Tensor mean_all(const Tensor& a) { return affine(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  Tensor result = make_result(std::move(shape), std::move(out), {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [ai, oi] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return result;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape& in = a.shape();
  if (perm.size() != in.size()) throw ShapeError("permutation rank does not match " + shape_to_string(in));
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("invalid axis permutation");
    seen[p] = true;
  }
  Shape out_shape(in.size());
  const auto in_strides = contiguous_strides(in);
  std::vector<std::size_t> src_strides(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = in[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  // src offset for every destination index, in destination order
  std::vector<std::size_t> src(a.numel());
  const std::vector<std::size_t> zeros(in.size(), 0);
  for_each_broadcast(out_shape, src_strides, zeros,
                     [&](std::size_t i, std::size_t s, std::size_t) { src[i] = s; });
  const auto d = a.data();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[src[i]];
  Tensor result = make_result(out_shape, std::move(out), {&a});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), oi = result.impl();
    Tape::current().record(result, [ai, oi, src = std::move(src)] {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      for (std::size_t i = 0; i < src.size(); ++i) ai->grad[src[i]] += oi->grad[i];
    });
  }
  return result;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank()) {
    throw ShapeError("cannot concatenate " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("cannot concatenate " + shape_to_string(a.shape()) + " and " +
                       shape_to_string(b.shape()));
    }
  }
  const std::size_t na = a.shape().back(), nb = b.shape().back();
  const std::size_t rows = a.numel() / na;
  Shape out_shape = a.shape();
  out_shape.back() = na + nb;
  std::vector<double> out;
  out.reserve(rows * (na + nb));
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    out.insert(out.end(), da.begin() + r * na, da.begin() + (r + 1) * na);
    out.insert(out.end(), db.begin() + r * nb, db.begin() + (r + 1) * nb);
  }
  Tensor result = make_result(std::move(out_shape), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    Tape::current().record(result, [ai, bi, oi, rows, na, nb] {
      if (ai->requires_grad) ai->ensure_grad();
      if (bi->requires_grad) bi->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = oi->grad.data() + r * (na + nb);
        if (ai->requires_grad) {
          for (std::size_t j = 0; j < na; ++j) ai->grad[r * na + j] += g[j];
        }
        if (bi->requires_grad) {
          for (std::size_t j = 0; j < nb; ++j) bi->grad[r * nb + j] += g[na + j];
        }
      }
    });
  }
  return result;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("logits must be [batch x classes], got " + shape_to_string(logits.shape()));
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("expected " + std::to_string(batch) + " labels, got " + std::to_string(labels.size()));
  }
  const auto z = logits.data();
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(classes) +
                      " classes");
    }
    const double* row = z.data() + i * classes;
    const double m = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[i * classes + c] = std::exp(row[c] - m);
      total += probs[i * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] /= total;
    loss += -(row[label] - m - std::log(total));
  }
  loss /= static_cast<double>(batch);
  Tensor result = make_result({}, {loss}, {&logits});
  if (result.requires_grad()) {
    ImplPtr li = logits.impl(), oi = result.impl();
    std::vector<int> owned(labels.begin(), labels.end());
    Tape::current().record(result, [li, oi, probs = std::move(probs), owned = std::move(owned), batch, classes] {
      if (!li->requires_grad) return;
      li->ensure_grad();
      const double g = oi->grad[0] / static_cast<double>(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<int>(c) == owned[i] ? 1.0 : 0.0;
          li->grad[i * classes + c] += g * (probs[i * classes + c] - onehot);
        }
      }
    });
  }
  return result;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss shapes differ: " + shape_to_string(pred.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  return mean_all(square(sub(pred, target)));
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  const Tensor leaves[] = {x};
  return grad_check([&] { return f(x); }, leaves, h);
}

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> leaves, double h) {
  std::vector<bool> previous;
  for (const Tensor& t : leaves) {
    previous.push_back(t.requires_grad());
    Tensor handle = t;
    handle.set_requires_grad(true);
    handle.zero_grad();
  }
  Tape::current().clear();
  const Tensor y = f();
  if (y.requires_grad()) backward(y);

  double worst = 0.0;
  bool saw_nan = false;
  for (const Tensor& t : leaves) {
    if (saw_nan) break;
    Tensor handle = t;
    std::vector<double> analytic(t.numel(), 0.0);
    if (handle.has_grad()) analytic.assign(handle.grad().begin(), handle.grad().end());
    auto values = handle.mutable_data();
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      // Divide by the step actually taken, which differs from 2h by rounding.
      values[i] = saved + h;
      const double xp = values[i];
      const double up = f().item();
      values[i] = saved - h;
      const double xm = values[i];
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (xp - xm);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (std::isnan(err)) {
        saw_nan = true;
        break;
      }
      worst = std::max(worst, err);
    }
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Tensor handle = leaves[i];
    handle.zero_grad();
    handle.set_requires_grad(previous[i]);
  }
  return saw_nan ? std::numeric_limits<double>::quiet_NaN() : worst;
}

}  // namespace kanforge
