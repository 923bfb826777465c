#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kanforge/tensor.hpp"

namespace kanforge {

enum class UnaryOp { Neg, Exp, Sin, Cos, Arctan, Silu, Relu, Square, Sqrt };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Mean, Max };

/// Numpy-style broadcast of two shapes aligned on trailing axes.
/// Throws ShapeError naming both shapes when incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor elementwise(UnaryOp op, const Tensor& a);
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

inline Tensor neg(const Tensor& a) { return elementwise(UnaryOp::Neg, a); }
inline Tensor exp(const Tensor& a) { return elementwise(UnaryOp::Exp, a); }
inline Tensor sin(const Tensor& a) { return elementwise(UnaryOp::Sin, a); }
inline Tensor cos(const Tensor& a) { return elementwise(UnaryOp::Cos, a); }
inline Tensor arctan(const Tensor& a) { return elementwise(UnaryOp::Arctan, a); }
inline Tensor silu(const Tensor& a) { return elementwise(UnaryOp::Silu, a); }
inline Tensor relu(const Tensor& a) { return elementwise(UnaryOp::Relu, a); }
inline Tensor square(const Tensor& a) { return elementwise(UnaryOp::Square, a); }
inline Tensor sqrt(const Tensor& a) { return elementwise(UnaryOp::Sqrt, a); }

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Div, a, b); }

/// a * s + t for scalars s, t.
Tensor affine(const Tensor& a, double scale, double shift = 0.0);

/// [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x k] . [n x k]^T -> [m x n]; the usual dense-layer product x W^T.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

/// Reduces along `axis`, dropping it. Max routes the gradient to the first
/// maximal index.
Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis);
inline Tensor sum(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Sum, a, axis); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Mean, a, axis); }
inline Tensor max(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Max, a, axis); }
/// Sum of every entry, as a rank-0 tensor.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& a, Shape shape);
/// General axis permutation; result axis i is input axis perm[i].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
/// Concatenation along the last axis; leading axes must match.
Tensor concat_last(const Tensor& a, const Tensor& b);

/// Mean over the batch of -log softmax(logits)[label], max-stabilised.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Mean squared error, as a rank-0 tensor.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Central finite-difference check of d f(x) / dx.
///
/// Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|). `x` is
/// perturbed in place and restored. NaN in f propagates to the result.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h = 1e-5);

/// Same as grad_check but for a closure over several leaves at once.
double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> leaves,
                  double h = 1e-5);

}  // namespace kanforge
