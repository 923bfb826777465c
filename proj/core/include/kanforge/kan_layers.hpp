#pragma once

// Kolmogorov-Arnold layer families plus the plain dense layer.
//
// Every layer maps a [batch x fan_in] tensor to [batch x fan_out]:
//
//   Linear      f(x W^T + b)                     f in {ReLU, Identity}
//   BSplineKAN  silu(x) W_base^T + B(x) W_spline^T   B = degree-k B-splines
//   FastKAN     R(x) W_rbf^T                     R = Gaussian RBFs, fixed sigma
//   WavKAN      y_j = sum_i w_ij psi((x_i - t_ij) / s_ij)   psi = Mexican hat
//   FourierKAN  cos(kx) A^T + sin(kx) B^T        k = 1..g
//   LarctanKAN  arctan(slope * x) W^T + b        per-input learnable slope
//
// "kan" and "efficientkan" both name BSplineKAN (decoupled base/spline
// weights).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kanforge/tensor.hpp"

namespace kanforge {

/// Knot or center layout of a basis-function layer.
struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t size = 5;    // G: intervals, centers or harmonics depending on kind
  std::size_t degree = 3;  // k: spline degree; unused by non-spline kinds

  /// Throws ConfigError unless lo < hi and size >= 1.
  void validate() const;
  double spacing() const { return (hi - lo) / static_cast<double>(size); }
  /// Uniform knot vector extended by `degree` knots on both sides:
  /// G + 2k + 1 entries with spacing (hi - lo) / G.
  std::vector<double> extended_knots() const;
  /// Number of degree-k basis functions, G + k.
  std::size_t basis_count() const { return size + degree; }

  bool operator==(const GridSpec&) const = default;
};

enum class LayerKind { Linear, BSplineKAN, FastKAN, WavKAN, FourierKAN, LarctanKAN };
enum class Activation { ReLU, Identity };

/// Canonical lower-case name ("linear", "efficientkan", ...).
std::string_view kind_name(LayerKind kind);
/// Accepts canonical names and aliases ("mlp", "kan"). Case-insensitive.
std::optional<LayerKind> parse_kind(std::string_view name);
/// Names accepted by parse_kind, for usage messages.
std::string valid_kind_names();
/// Grid used when a kind is instantiated without an explicit grid:
/// B-spline G=5 k=3 on [-1,1]; FastKAN G=8 on [-2,2]; FourierKAN g=5.
GridSpec default_grid(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  GridSpec grid{};
  Activation activation = Activation::Identity;  // Linear only

  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
};

struct LayerParams {
  std::vector<Parameter> tensors;
  std::uint64_t init_seed = 0;

  /// Throws ShapeError if `name` is absent.
  const Tensor& get(std::string_view name) const;
  std::size_t total_size() const;
};

/// Exact trainable parameter count:
///   Linear fi*fo + fo          BSplineKAN fi*fo*(1 + G + k)
///   FastKAN fi*fo*G            WavKAN 3*fi*fo
///   FourierKAN 2*fi*fo*g       LarctanKAN fi*fo + fo + fi
std::size_t param_count(const LayerSpec& spec);

/// Floating-point operations of one forward pass over `batch` rows.
///
/// Counting convention: a multiply-add is 2 operations, a bias add is 1, and
/// every transcendental or basis evaluation costs a fixed per-kind constant
/// (see kFlops* below). The estimate is linear in `batch`.
std::size_t flops_estimate(const LayerSpec& spec, std::size_t batch);

inline constexpr std::size_t kFlopsSilu = 4;         // exp, add, div, mul
inline constexpr std::size_t kFlopsSplineBasis = 6;  // per basis function per input (Cox-de Boor)
inline constexpr std::size_t kFlopsRbf = 4;          // sub, square, scale, exp
inline constexpr std::size_t kFlopsWavelet = 8;      // affine map, u^2, exp, product
inline constexpr std::size_t kFlopsTrig = 2;         // harmonic multiply + sin/cos
inline constexpr std::size_t kFlopsArctan = 2;       // slope multiply + arctan

/// Glorot-uniform weights (bound sqrt(6 / (fi + fo))), basis coefficients
/// scaled by a further 0.1, zero biases, unit LarctanKAN slopes and WavKAN
/// scales. Deterministic in (spec, seed).
LayerParams init_layer(const LayerSpec& spec, std::uint64_t seed);

/// All G + k degree-k B-spline basis functions at every entry of x, via the
/// Cox-de Boor recursion on the extended uniform knot vector (no clamping
/// outside [lo, hi]). Result shape is x.shape() + [G + k]. Differentiable in x.
Tensor bspline_basis(const Tensor& x, const GridSpec& grid);

/// reshape(bspline_basis(x), [batch x fi*(G+k)]) . weight^T without building
/// the dense basis. x is [batch x fi], weight [fo x fi*(G+k)].
Tensor spline_matmul(const Tensor& x, const Tensor& weight, const GridSpec& grid);

/// Mexican hat wavelet (2 / (sqrt(3) pi^(1/4))) (1 - u^2) exp(-u^2 / 2).
double mexican_hat(double u);

Tensor forward_linear(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
Tensor forward_bspline_kan(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
Tensor forward_fastkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
Tensor forward_wavkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
Tensor forward_fourierkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
Tensor forward_larctankan(const Tensor& x, const LayerParams& params, const LayerSpec& spec);

/// A layer: spec plus its parameters.
class Layer {
 public:
  Layer() = default;
  Layer(LayerSpec spec, std::uint64_t seed);
  Layer(LayerSpec spec, LayerParams params);

  /// [batch x fan_in] -> [batch x fan_out]; ShapeError on fan mismatch.
  Tensor forward(const Tensor& x) const;

  const LayerSpec& spec() const { return spec_; }
  const LayerParams& params() const { return params_; }
  LayerParams& params() { return params_; }
  std::size_t param_count() const { return kanforge::param_count(spec_); }

  /// Deep copy of the parameters.
  Layer clone() const;

 private:
  LayerSpec spec_;
  LayerParams params_;
};

/// Layers applied in order; used for the function-fitting regressors.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  Tensor forward(const Tensor& x) const;
  std::vector<Parameter> parameters() const;
  std::size_t param_count() const;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

/// Builds a stack fan_in -> widths... -> fan_out of one kind. Linear hidden
/// layers use ReLU, the final Linear layer is affine.
Sequential make_stack(LayerKind kind, std::size_t fan_in, const std::vector<std::size_t>& widths,
                      std::size_t fan_out, const GridSpec& grid, std::uint64_t seed);

// Parameter container: versioned binary list of (name, shape, f64 payload).
//
//   magic   "KFPARAMS"                    8 bytes
//   version u32 little-endian (= 1)
//   count   u64
//   count x { name_len u32, name bytes, rank u32, dims u64[rank],
//             values f64[numel] (IEEE-754 bit pattern, little-endian) }
inline constexpr std::uint32_t kParamFormatVersion = 1;

void write_params(std::ostream& out, const std::vector<Parameter>& params);
/// Throws DataError on bad magic, unsupported version or truncation.
std::vector<Parameter> read_params(std::istream& in);

}  // namespace kanforge
