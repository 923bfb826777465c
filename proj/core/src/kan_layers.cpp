#include "kanforge/kan_layers.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <utility>

#include "kanforge/error.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"

namespace kanforge {

void GridSpec::validate() const {
  if (!(lo < hi)) {
    throw ConfigError("grid range must satisfy lo < hi, got [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
  if (size == 0) throw ConfigError("grid size must be positive");
}

std::vector<double> GridSpec::extended_knots() const {
  const std::size_t n = size + 2 * degree + 1;
  const double h = spacing();
  std::vector<double> knots(n);
  for (std::size_t j = 0; j < n; ++j) {
    knots[j] = lo + (static_cast<double>(j) - static_cast<double>(degree)) * h;
  }
  return knots;
}

namespace {

struct KindName {
  std::string_view name;
  LayerKind kind;
};

constexpr std::array<KindName, 8> kKindNames{{
    {"linear", LayerKind::Linear},
    {"mlp", LayerKind::Linear},
    {"kan", LayerKind::BSplineKAN},
    {"efficientkan", LayerKind::BSplineKAN},
    {"fastkan", LayerKind::FastKAN},
    {"wavkan", LayerKind::WavKAN},
    {"fourierkan", LayerKind::FourierKAN},
    {"larctankan", LayerKind::LarctanKAN},
}};

}  // namespace

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::BSplineKAN: return "efficientkan";
    case LayerKind::FastKAN: return "fastkan";
    case LayerKind::WavKAN: return "wavkan";
    case LayerKind::FourierKAN: return "fourierkan";
    case LayerKind::LarctanKAN: return "larctankan";
  }
  return "unknown";
}

std::optional<LayerKind> parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& entry : kKindNames) {
    if (entry.name == lower) return entry.kind;
  }
  return std::nullopt;
}

std::string valid_kind_names() {
  std::string out;
  for (const auto& entry : kKindNames) {
    if (!out.empty()) out += ", ";
    out += entry.name;
  }
  return out;
}

GridSpec default_grid(LayerKind kind) {
  switch (kind) {
    case LayerKind::BSplineKAN: return {-1.0, 1.0, 5, 3};
    case LayerKind::FastKAN: return {-2.0, 2.0, 8, 0};
    case LayerKind::FourierKAN: return {-1.0, 1.0, 5, 0};
    default: return {-1.0, 1.0, 1, 0};
  }
}

void LayerSpec::validate() const {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("layer fan_in and fan_out must be positive");
  grid.validate();
  if (kind == LayerKind::FastKAN && grid.size < 2) {
    throw ConfigError("FastKAN needs at least 2 centers (grid size >= 2)");
  }
}

const Tensor& LayerParams::get(std::string_view name) const {
  for (const auto& p : tensors) {
    if (p.name == name) return p.value;
  }
  throw ShapeError("layer has no parameter named '" + std::string(name) + "'");
}

std::size_t LayerParams::total_size() const {
  std::size_t n = 0;
  for (const auto& p : tensors) n += p.value.numel();
  return n;
}

std::size_t param_count(const LayerSpec& spec) {
  const std::size_t fi = spec.fan_in, fo = spec.fan_out;
  const std::size_t g = spec.grid.size, k = spec.grid.degree;
  switch (spec.kind) {
    case LayerKind::Linear: return fi * fo + fo;
    case LayerKind::BSplineKAN: return fi * fo * (1 + g + k);
    case LayerKind::FastKAN: return fi * fo * g;
    case LayerKind::WavKAN: return 3 * fi * fo;
    case LayerKind::FourierKAN: return 2 * fi * fo * g;
    case LayerKind::LarctanKAN: return fi * fo + fo + fi;
  }
  return 0;
}

std::size_t flops_estimate(const LayerSpec& spec, std::size_t batch) {
  const std::size_t fi = spec.fan_in, fo = spec.fan_out;
  const std::size_t g = spec.grid.size, k = spec.grid.degree;
  std::size_t per_row = 0;
  switch (spec.kind) {
    case LayerKind::Linear: per_row = 2 * fi * fo + fo; break;
    case LayerKind::BSplineKAN:
      per_row = fi * (kFlopsSilu + (g + k) * kFlopsSplineBasis) + 2 * fi * fo + 2 * fi * (g + k) * fo;
      break;
    case LayerKind::FastKAN: per_row = fi * g * kFlopsRbf + 2 * fi * g * fo; break;
    case LayerKind::WavKAN: per_row = fi * fo * kFlopsWavelet + 2 * fi * fo; break;
    case LayerKind::FourierKAN: per_row = 2 * fi * g * kFlopsTrig + 4 * fi * g * fo; break;
    case LayerKind::LarctanKAN: per_row = fi * kFlopsArctan + 2 * fi * fo + fo; break;
  }
  return batch * per_row;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

LayerParams init_layer(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t fi = spec.fan_in, fo = spec.fan_out;
  const double bound = std::sqrt(6.0 / static_cast<double>(fi + fo));
  const double coef_bound = 0.1 * bound;
  LayerParams p;
  p.init_seed = seed;
  auto add = [&](std::string name, Tensor t) { p.tensors.push_back({std::move(name), std::move(t)}); };
  switch (spec.kind) {
    case LayerKind::Linear:
      add("weight", uniform_tensor({fo, fi}, bound, rng));
      add("bias", Tensor::zeros({fo}, true));
      break;
    case LayerKind::BSplineKAN:
      add("base_weight", uniform_tensor({fo, fi}, bound, rng));
      add("spline_weight", uniform_tensor({fo, fi * spec.grid.basis_count()}, coef_bound, rng));
      break;
    case LayerKind::FastKAN:
      add("rbf_weight", uniform_tensor({fo, fi * spec.grid.size}, coef_bound, rng));
      break;
    case LayerKind::WavKAN:
      add("weight", uniform_tensor({fo, fi}, bound, rng));
      add("log_scale", Tensor::zeros({fo, fi}, true));
      add("translation", Tensor::zeros({fo, fi}, true));
      break;
    case LayerKind::FourierKAN:
      add("cos_coef", uniform_tensor({fo, fi * spec.grid.size}, coef_bound, rng));
      add("sin_coef", uniform_tensor({fo, fi * spec.grid.size}, coef_bound, rng));
      break;
    case LayerKind::LarctanKAN:
      add("weight", uniform_tensor({fo, fi}, bound, rng));
      add("bias", Tensor::zeros({fo}, true));
      add("slope", Tensor::full({fi}, 1.0, true));
      break;
  }
  return p;
}

namespace {

// The k + 1 degree-k functions that can be nonzero at v, B_{s}..B_{s+k}, and
// their x-derivatives. Indices may fall outside [0, G + k); callers skip
// those. Returns false when v lies outside the extended knot span.
class LocalBasis {
 public:
  explicit LocalBasis(const GridSpec& grid)
      : k_(grid.degree), n0_(grid.size + 2 * grid.degree), lo_(grid.lo), h_(grid.spacing()),
        inv_(k_ + 1) {
    for (std::size_t p = 1; p <= k_; ++p) inv_[p] = 1.0 / static_cast<double>(p);
  }

  bool eval(double v, std::ptrdiff_t& start, double* value, double* deriv) const {
    const auto last = static_cast<std::ptrdiff_t>(n0_) - 1;
    if (!(v >= knot(0) && v < knot(last + 1))) return false;
    auto i = static_cast<std::ptrdiff_t>(std::floor((v - knot(0)) / h_));
    i = std::clamp<std::ptrdiff_t>(i, 0, last);
    while (i > 0 && v < knot(i)) --i;
    while (i < last && v >= knot(i + 1)) ++i;
    // uniform knots: with u the position inside the interval, the recursion
    // weights are (u + p - r - 1) / p and (r + 1 - u) / p
    const double u = (v - knot(i)) / h_;
    // value[r] holds B_{i-p+r, p} after pass p
    value[0] = 1.0;
    for (std::size_t p = 1; p <= k_; ++p) {
      if (p == k_) {
        // dB_{j,k}/dx = (B_{j,k-1} - B_{j+1,k-1}) / h
        for (std::size_t r = 0; r <= k_; ++r) {
          const double lo = r > 0 ? value[r - 1] : 0.0;
          const double hi = r < k_ ? value[r] : 0.0;
          deriv[r] = (lo - hi) / h_;
        }
      }
      double saved = 0.0;
      for (std::size_t r = 0; r < p; ++r) {
        const double tmp = value[r] * inv_[p];
        const double rd = static_cast<double>(r);
        value[r] = saved + (rd + 1.0 - u) * tmp;
        saved = (u + static_cast<double>(p) - rd - 1.0) * tmp;
      }
      value[p] = saved;
    }
    if (k_ == 0) deriv[0] = 0.0;
    start = i - static_cast<std::ptrdiff_t>(k_);
    return true;
  }

 private:
  // uniform knots, also past either end of the extended vector
  double knot(std::ptrdiff_t j) const {
    return lo_ + (static_cast<double>(j) - static_cast<double>(k_)) * h_;
  }

  std::size_t k_;
  std::size_t n0_;
  double lo_;
  double h_;
  std::vector<double> inv_;
};

}  // namespace

Tensor bspline_basis(const Tensor& x, const GridSpec& grid) {
  grid.validate();
  const LocalBasis local(grid);
  const std::size_t k = grid.degree;
  const std::size_t nb = grid.basis_count();
  const auto xs = x.data();
  std::vector<double> out(xs.size() * nb);
  std::vector<double> deriv(xs.size() * (k + 1), 0.0);
  std::vector<std::ptrdiff_t> starts(xs.size(), 0);
  std::vector<double> value(k + 1);
  for (std::size_t e = 0; e < xs.size(); ++e) {
    if (!local.eval(xs[e], starts[e], value.data(), deriv.data() + e * (k + 1))) continue;
    for (std::size_t r = 0; r <= k; ++r) {
      const std::ptrdiff_t j = starts[e] + static_cast<std::ptrdiff_t>(r);
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(nb)) out[e * nb + static_cast<std::size_t>(j)] = value[r];
    }
  }
  Shape shape = x.shape();
  shape.push_back(nb);
  Tensor result = make_result(std::move(shape), std::move(out), {&x});
  if (result.requires_grad() && k > 0) {
    auto xi = x.impl(), oi = result.impl();
    Tape::current().record(result, [xi, oi, deriv = std::move(deriv), starts = std::move(starts), nb, k] {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t e = 0; e < xi->data.size(); ++e) {
        const double* g = oi->grad.data() + e * nb;
        double acc = 0.0;
        for (std::size_t r = 0; r <= k; ++r) {
          const std::ptrdiff_t j = starts[e] + static_cast<std::ptrdiff_t>(r);
          if (j >= 0 && j < static_cast<std::ptrdiff_t>(nb)) acc += g[j] * deriv[e * (k + 1) + r];
        }
        xi->grad[e] += acc;
      }
    });
  }
  // degree 0 basis is piecewise constant: zero gradient, nothing to record
  return result;
}

Tensor spline_matmul(const Tensor& x, const Tensor& weight, const GridSpec& grid) {
  grid.validate();
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1) * grid.basis_count()) {
    throw ShapeError("spline_matmul expects x [batch x fi] and weight [fo x fi*" +
                     std::to_string(grid.basis_count()) + "], got " + shape_to_string(x.shape()) + " and " +
                     shape_to_string(weight.shape()));
  }
  const LocalBasis local(grid);
  const std::size_t batch = x.dim(0), fi = x.dim(1), fo = weight.dim(0);
  const std::size_t k = grid.degree, nb = grid.basis_count(), kb = k + 1;
  const auto xs = x.data();
  const auto w = weight.data();
  // weight transposed to [fi*nb x fo] so each basis function owns a contiguous row
  std::vector<double> wt(fi * nb * fo);
  for (std::size_t o = 0; o < fo; ++o) {
    for (std::size_t c = 0; c < fi * nb; ++c) wt[c * fo + o] = w[o * fi * nb + c];
  }
  // per entry: first row of wt, and value/derivative of each of the k + 1
  // functions (zero where the function index is out of range)
  std::vector<std::size_t> rows(xs.size(), 0);
  std::vector<double> value(xs.size() * kb, 0.0), deriv(xs.size() * kb, 0.0);
  std::vector<double> v(kb), d(kb);
  std::vector<double> out(batch * fo, 0.0);
  for (std::size_t e = 0; e < xs.size(); ++e) {
    const std::size_t i = e % fi;
    std::ptrdiff_t start = 0;
    if (!local.eval(xs[e], start, v.data(), d.data())) continue;
    // shift the window inside [0, nb); out-of-range functions keep zeros
    const std::ptrdiff_t first = std::clamp<std::ptrdiff_t>(start, 0, static_cast<std::ptrdiff_t>(nb - kb));
    rows[e] = i * nb + static_cast<std::size_t>(first);
    for (std::size_t r = 0; r < kb; ++r) {
      const std::ptrdiff_t slot = start + static_cast<std::ptrdiff_t>(r) - first;
      if (slot < 0 || slot >= static_cast<std::ptrdiff_t>(kb)) continue;
      if (start + static_cast<std::ptrdiff_t>(r) >= static_cast<std::ptrdiff_t>(nb)) continue;
      value[e * kb + static_cast<std::size_t>(slot)] = v[r];
      deriv[e * kb + static_cast<std::size_t>(slot)] = d[r];
    }
    double* orow = out.data() + (e / fi) * fo;
    for (std::size_t r = 0; r < kb; ++r) {
      const double b = value[e * kb + r];
      if (b == 0.0) continue;
      const double* wrow = wt.data() + (rows[e] + r) * fo;
      for (std::size_t o = 0; o < fo; ++o) orow[o] += b * wrow[o];
    }
  }
  Tensor result = make_result({batch, fo}, std::move(out), {&x, &weight});
  if (result.requires_grad()) {
    auto xi = x.impl(), wi = weight.impl(), oi = result.impl();
    Tape::current().record(result, [xi, wi, oi, wt = std::move(wt), rows = std::move(rows),
                                    value = std::move(value), deriv = std::move(deriv), fi, fo, nb, kb] {
      const std::size_t n = xi->data.size();
      if (xi->requires_grad) {
        xi->ensure_grad();
        for (std::size_t e = 0; e < n; ++e) {
          const double* g = oi->grad.data() + (e / fi) * fo;
          double acc = 0.0;
          for (std::size_t r = 0; r < kb; ++r) {
            const double db = deriv[e * kb + r];
            if (db == 0.0) continue;
            const double* wrow = wt.data() + (rows[e] + r) * fo;
            double dot = 0.0;
            for (std::size_t o = 0; o < fo; ++o) dot += g[o] * wrow[o];
            acc += db * dot;
          }
          xi->grad[e] += acc;
        }
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        std::vector<double> gt(fi * nb * fo, 0.0);
        for (std::size_t e = 0; e < n; ++e) {
          const double* g = oi->grad.data() + (e / fi) * fo;
          for (std::size_t r = 0; r < kb; ++r) {
            const double b = value[e * kb + r];
            if (b == 0.0) continue;
            double* grow = gt.data() + (rows[e] + r) * fo;
            for (std::size_t o = 0; o < fo; ++o) grow[o] += b * g[o];
          }
        }
        for (std::size_t o = 0; o < fo; ++o) {
          for (std::size_t c = 0; c < fi * nb; ++c) wi->grad[o * fi * nb + c] += gt[c * fo + o];
        }
      }
    });
  }
  return result;
}

double mexican_hat(double u) {
  const double c = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
  return c * (1.0 - u * u) * std::exp(-0.5 * u * u);
}

namespace {

void check_input(const Tensor& x, const LayerSpec& spec) {
  if (x.rank() != 2 || x.dim(1) != spec.fan_in) {
    throw ShapeError(std::string(kind_name(spec.kind)) + " layer expects [batch x " +
                     std::to_string(spec.fan_in) + "], got " + shape_to_string(x.shape()));
  }
}

}  // namespace

Tensor forward_linear(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  Tensor y = add(matmul_transposed(x, params.get("weight")), params.get("bias"));
  return spec.activation == Activation::ReLU ? relu(y) : y;
}

Tensor forward_bspline_kan(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  Tensor base = matmul_transposed(silu(x), params.get("base_weight"));
  return add(base, spline_matmul(x, params.get("spline_weight"), spec.grid));
}

Tensor forward_fastkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  const std::size_t batch = x.dim(0), g = spec.grid.size;
  const double step = (spec.grid.hi - spec.grid.lo) / static_cast<double>(g - 1);
  std::vector<double> mu(g);
  for (std::size_t i = 0; i < g; ++i) mu[i] = spec.grid.lo + static_cast<double>(i) * step;
  const Tensor centers({g}, std::move(mu));
  const double sigma = step;
  Tensor diff = sub(reshape(x, {batch, spec.fan_in, 1}), centers);
  Tensor features = exp(affine(square(diff), -1.0 / (2.0 * sigma * sigma)));
  return matmul_transposed(reshape(features, {batch, spec.fan_in * g}), params.get("rbf_weight"));
}

Tensor forward_wavkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  const std::size_t batch = x.dim(0);
  const double c = mexican_hat(0.0);
  Tensor shifted = sub(reshape(x, {batch, 1, spec.fan_in}), params.get("translation"));
  Tensor u = div(shifted, exp(params.get("log_scale")));  // [batch x fo x fi]
  Tensor u2 = square(u);
  Tensor psi = mul(affine(u2, -c, c), exp(affine(u2, -0.5)));
  return sum(mul(psi, params.get("weight")), 2);
}

Tensor forward_fourierkan(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  const std::size_t batch = x.dim(0), g = spec.grid.size;
  std::vector<double> k(g);
  for (std::size_t i = 0; i < g; ++i) k[i] = static_cast<double>(i + 1);
  const Tensor harmonics({g}, std::move(k));
  Tensor kx = mul(reshape(x, {batch, spec.fan_in, 1}), harmonics);
  const Shape flat{batch, spec.fan_in * g};
  Tensor c = matmul_transposed(reshape(cos(kx), flat), params.get("cos_coef"));
  Tensor s = matmul_transposed(reshape(sin(kx), flat), params.get("sin_coef"));
  return add(c, s);
}

Tensor forward_larctankan(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_input(x, spec);
  Tensor h = arctan(mul(x, params.get("slope")));
  return add(matmul_transposed(h, params.get("weight")), params.get("bias"));
}

Layer::Layer(LayerSpec spec, std::uint64_t seed) : spec_(spec), params_(init_layer(spec, seed)) {}

Layer::Layer(LayerSpec spec, LayerParams params) : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  if (params_.total_size() != kanforge::param_count(spec_)) {
    throw ShapeError("parameter tensors hold " + std::to_string(params_.total_size()) + " values, " +
                     std::string(kind_name(spec_.kind)) + " layer needs " +
                     std::to_string(kanforge::param_count(spec_)));
  }
}

Tensor Layer::forward(const Tensor& x) const {
  switch (spec_.kind) {
    case LayerKind::Linear: return forward_linear(x, params_, spec_);
    case LayerKind::BSplineKAN: return forward_bspline_kan(x, params_, spec_);
    case LayerKind::FastKAN: return forward_fastkan(x, params_, spec_);
    case LayerKind::WavKAN: return forward_wavkan(x, params_, spec_);
    case LayerKind::FourierKAN: return forward_fourierkan(x, params_, spec_);
    case LayerKind::LarctanKAN: return forward_larctankan(x, params_, spec_);
  }
  throw ConfigError("unknown layer kind");
}

Layer Layer::clone() const {
  LayerParams copy;
  copy.init_seed = params_.init_seed;
  for (const auto& p : params_.tensors) copy.tensors.push_back({p.name, p.value.clone()});
  Layer out;
  out.spec_ = spec_;
  out.params_ = std::move(copy);
  return out;
}

Tensor Sequential::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer.forward(h);
  return h;
}

std::vector<Parameter> Sequential::parameters() const {
  std::vector<Parameter> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (const auto& p : layers_[i].params().tensors) {
      out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value});
    }
  }
  return out;
}

std::size_t Sequential::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.param_count();
  return n;
}

Sequential make_stack(LayerKind kind, std::size_t fan_in, const std::vector<std::size_t>& widths,
                      std::size_t fan_out, const GridSpec& grid, std::uint64_t seed) {
  std::vector<std::size_t> dims{fan_in};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(fan_out);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    LayerSpec spec{kind, dims[i], dims[i + 1], grid, Activation::Identity};
    if (kind == LayerKind::Linear && i + 2 < dims.size()) spec.activation = Activation::ReLU;
    layers.emplace_back(spec, derive_seed(seed, i));
  }
  return Sequential(std::move(layers));
}

namespace {

constexpr char kMagic[8] = {'K', 'F', 'P', 'A', 'R', 'A', 'M', 'S'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw DataError("parameter container truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_params(std::ostream& out, const std::vector<Parameter>& params) {
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kParamFormatVersion);
  put_le<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_le<std::uint64_t>(out, d);
    for (double v : p.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<Parameter> read_params(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a parameter container (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kParamFormatVersion) {
    throw DataError("unsupported parameter container version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(in);
  std::vector<Parameter> params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("parameter container truncated");
    const auto rank = get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(in);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    params.push_back({std::move(name), Tensor(std::move(shape), std::move(values), true)});
  }
  return params;
}

}  // namespace kanforge
