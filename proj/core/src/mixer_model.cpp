#include "kanforge/mixer_model.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "kanforge/error.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"

namespace kanforge {

void WindowShape::validate() const {
  if (length == 0 || channels == 0 || intervals == 0 || interval_length == 0) {
    throw ConfigError("window dimensions must be positive");
  }
  if (intervals * interval_length != length) {
    throw ConfigError("window length " + std::to_string(length) + " is not T*tau = " +
                      std::to_string(intervals) + "*" + std::to_string(interval_length));
  }
}

void ModelSpec::validate() const {
  window.validate();
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (expansion == 0) throw ConfigError("expansion must be positive");
  for (const auto& spec : model_layer_specs(*this)) spec.validate();
}

std::string ModelSpec::placement() const {
  return std::string{embedding.code(), '-', mixer.code(), '-', classifier.code()};
}

std::size_t ModelSpec::token_features() const {
  const std::size_t tau = window.interval_length;
  const std::size_t per_channel = use_fft ? tau + tau / 2 + 1 : tau;
  return per_channel * window.channels;
}

void apply_placement(ModelSpec& spec, const std::string& code, LayerKind embedding_variant,
                     LayerKind mixer_variant, LayerKind classifier_variant) {
  std::string letters;
  for (char c : code) {
    if (c == '-' || c == ' ') continue;
    letters += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  if (letters.size() != 3 || letters.find_first_not_of("KM") != std::string::npos) {
    throw ConfigError("invalid placement code '" + code + "' (expected three of K/M, e.g. K-M-M)");
  }
  auto pick = [](char c, LayerKind variant) {
    return SlotSpec::of(c == 'K' ? variant : LayerKind::Linear);
  };
  spec.embedding = pick(letters[0], embedding_variant);
  spec.mixer = pick(letters[1], mixer_variant);
  spec.classifier = pick(letters[2], classifier_variant);
}

ModelSpec hybrid_spec(const WindowShape& window, std::size_t classes, std::size_t hidden) {
  ModelSpec spec;
  spec.window = window;
  spec.classes = classes;
  spec.hidden = hidden;
  spec.embedding = SlotSpec::of(LayerKind::BSplineKAN);
  spec.mixer = SlotSpec::of(LayerKind::Linear);
  spec.classifier = SlotSpec::of(LayerKind::LarctanKAN);
  return spec;
}

Tensor split_windows(const Tensor& x, const WindowShape& shape) {
  shape.validate();
  if (x.rank() != 3 || x.dim(1) != shape.length || x.dim(2) != shape.channels) {
    throw ShapeError("expected windows [B x " + std::to_string(shape.length) + " x " +
                     std::to_string(shape.channels) + "], got " + shape_to_string(x.shape()));
  }
  // Row-major [L x C] with L = T * tau is already [T x tau x C].
  return reshape(x, {x.dim(0), shape.intervals, shape.interval_length * shape.channels});
}

Tensor merge_intervals(const Tensor& intervals, const WindowShape& shape) {
  return reshape(intervals, {intervals.dim(0), shape.length, shape.channels});
}

Tensor fft_features(const Tensor& intervals, const WindowShape& shape, double spectrum_scale) {
  const std::size_t tau = shape.interval_length, ch = shape.channels;
  const std::size_t bins = tau / 2 + 1;
  if (intervals.rank() != 3 || intervals.dim(2) != tau * ch) {
    throw ShapeError("expected intervals [B x T x " + std::to_string(tau * ch) + "], got " +
                     shape_to_string(intervals.shape()));
  }
  std::vector<double> cos_table(tau * bins), sin_table(tau * bins);
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t n = 0; n < tau; ++n) {
      // reduce k*n mod tau first so the angle stays exact for large products
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * n) % tau) / static_cast<double>(tau);
      cos_table[k * tau + n] = std::cos(angle);
      sin_table[k * tau + n] = std::sin(angle);
    }
  }
  const std::size_t rows = intervals.dim(0) * intervals.dim(1);
  const std::size_t width = (tau + bins) * ch;
  const auto src = intervals.data();
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = src.data() + r * tau * ch;
    double* dst = out.data() + r * width;
    std::copy_n(in, tau * ch, dst);
    for (std::size_t k = 0; k < bins; ++k) {
      for (std::size_t c = 0; c < ch; ++c) {
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < tau; ++n) {
          const double v = in[n * ch + c];
          re += v * cos_table[k * tau + n];
          im -= v * sin_table[k * tau + n];
        }
        dst[tau * ch + k * ch + c] = spectrum_scale * std::sqrt(re * re + im * im);
      }
    }
  }
  return Tensor({intervals.dim(0), intervals.dim(1), width}, std::move(out));
}

Norm::Norm(std::size_t width) : gain(Tensor::full({width}, 1.0, true)), bias(Tensor::zeros({width}, true)) {}

Tensor Norm::forward(const Tensor& x) const {
  Shape keep = x.shape();
  keep.back() = 1;
  const std::size_t axis = x.rank() - 1;
  Tensor centered = sub(x, reshape(mean(x, axis), keep));
  Tensor var = reshape(mean(square(centered), axis), keep);
  Tensor normed = div(centered, sqrt(affine(var, 1.0, kEps)));
  return add(mul(normed, gain), bias);
}

namespace {

constexpr std::uint64_t kEmbeddingStream = 0;
constexpr std::uint64_t kClassifierStream = 1;
constexpr std::uint64_t kMixerStream = 100;

LayerSpec slot_layer(const SlotSpec& slot, std::size_t fi, std::size_t fo, Activation act) {
  return LayerSpec{slot.kind, fi, fo, slot.grid, act};
}

}  // namespace

std::vector<LayerSpec> model_layer_specs(const ModelSpec& spec) {
  std::vector<LayerSpec> out;
  const std::size_t h = spec.hidden, t = spec.window.intervals;
  out.push_back(slot_layer(spec.embedding, spec.token_features(), h, Activation::ReLU));
  for (std::size_t b = 0; b < spec.mixer_depth; ++b) {
    out.push_back(slot_layer(spec.mixer, t, t, Activation::ReLU));
    out.push_back(slot_layer(spec.mixer, h, spec.expansion * h, Activation::ReLU));
    out.push_back(slot_layer(spec.mixer, spec.expansion * h, h, Activation::Identity));
  }
  out.push_back(slot_layer(spec.classifier, h, spec.classes, Activation::Identity));
  return out;
}

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  const auto specs = model_layer_specs(spec_);
  embedding_ = Layer(specs.front(), derive_seed(seed, kEmbeddingStream));
  for (std::size_t b = 0; b < spec_.mixer_depth; ++b) {
    const std::uint64_t s = kMixerStream + 3 * b;
    blocks_.push_back(MixerBlock{Norm(spec_.hidden), Layer(specs[1 + 3 * b], derive_seed(seed, s)),
                                 Norm(spec_.hidden), Layer(specs[2 + 3 * b], derive_seed(seed, s + 1)),
                                 Layer(specs[3 + 3 * b], derive_seed(seed, s + 2))});
  }
  classifier_ = Layer(specs.back(), derive_seed(seed, kClassifierStream));
}

Tensor Model::forward(const Tensor& x) const {
  const WindowShape& w = spec_.window;
  Tensor tokens = split_windows(x, w);
  if (spec_.use_fft) {
    // orthonormal DFT scaling keeps spectrum magnitudes on the scale of the
    // standardised samples
    tokens = fft_features(tokens, w, 1.0 / std::sqrt(static_cast<double>(w.interval_length)));
  }
  const std::size_t batch = x.dim(0), t = w.intervals, h = spec_.hidden;
  Tensor flat = reshape(tokens, {batch * t, spec_.token_features()});
  Tensor z = reshape(embedding_.forward(flat), {batch, t, h});
  for (const auto& block : blocks_) {
    Tensor u = permute(block.token_norm.forward(z), {0, 2, 1});  // [B x H x T]
    u = block.token_mix.forward(reshape(u, {batch * h, t}));
    z = add(z, permute(reshape(u, {batch, h, t}), {0, 2, 1}));
    Tensor v = reshape(block.channel_norm.forward(z), {batch * t, h});
    v = block.channel_down.forward(block.channel_up.forward(v));
    z = add(z, reshape(v, {batch, t, h}));
  }
  return classifier_.forward(mean(z, 1));
}

std::vector<Parameter> Model::parameters() const {
  std::vector<Parameter> out;
  auto add_layer = [&](const std::string& prefix, const Layer& layer) {
    for (const auto& p : layer.params().tensors) out.push_back({prefix + "." + p.name, p.value});
  };
  auto add_norm = [&](const std::string& prefix, const Norm& norm) {
    out.push_back({prefix + ".gain", norm.gain});
    out.push_back({prefix + ".bias", norm.bias});
  };
  add_layer("embedding", embedding_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "mixer." + std::to_string(b);
    add_norm(p + ".token_norm", blocks_[b].token_norm);
    add_layer(p + ".token_mix", blocks_[b].token_mix);
    add_norm(p + ".channel_norm", blocks_[b].channel_norm);
    add_layer(p + ".channel_up", blocks_[b].channel_up);
    add_layer(p + ".channel_down", blocks_[b].channel_down);
  }
  add_layer("classifier", classifier_);
  return out;
}

SlotParams Model::slot_params() const {
  SlotParams s;
  s.embedding = embedding_.param_count();
  for (const auto& b : blocks_) {
    s.mixer += b.token_norm.param_count() + b.token_mix.param_count() + b.channel_norm.param_count() +
               b.channel_up.param_count() + b.channel_down.param_count();
  }
  s.classifier = classifier_.param_count();
  return s;
}

std::size_t Model::flops_estimate(std::size_t batch) const {
  const std::size_t t = spec_.window.intervals, h = spec_.hidden;
  const std::size_t tokens = batch * t;
  std::size_t total = kanforge::flops_estimate(embedding_.spec(), tokens);
  for (const auto& b : blocks_) {
    total += 2 * 4 * tokens * h;  // two norms
    total += kanforge::flops_estimate(b.token_mix.spec(), batch * h);
    total += kanforge::flops_estimate(b.channel_up.spec(), tokens);
    total += kanforge::flops_estimate(b.channel_down.spec(), tokens);
    total += 2 * tokens * h;  // residual adds
  }
  total += tokens * h;  // mean pool
  total += kanforge::flops_estimate(classifier_.spec(), batch);
  return total;
}

Model Model::clone() const {
  Model copy = *this;
  copy.embedding_ = embedding_.clone();
  for (auto& b : copy.blocks_) {
    b.token_norm.gain = b.token_norm.gain.clone();
    b.token_norm.bias = b.token_norm.bias.clone();
    b.token_mix = b.token_mix.clone();
    b.channel_norm.gain = b.channel_norm.gain.clone();
    b.channel_norm.bias = b.channel_norm.bias.clone();
    b.channel_up = b.channel_up.clone();
    b.channel_down = b.channel_down.clone();
  }
  copy.classifier_ = classifier_.clone();
  return copy;
}

void Model::load_parameters(const std::vector<Parameter>& params) {
  auto mine = parameters();
  if (mine.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(params.size()) + " tensors, model has " +
                    std::to_string(mine.size()));
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != params[i].name || mine[i].value.shape() != params[i].value.shape()) {
      throw DataError("checkpoint tensor '" + params[i].name + "' does not match model tensor '" +
                      mine[i].name + "'");
    }
    auto dst = mine[i].value.mutable_data();
    const auto src = params[i].value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_slot(std::ostringstream& os, const std::string& name, const SlotSpec& slot) {
  os << name << ".kind=" << kind_name(slot.kind) << '\n';
  os << name << ".grid_lo=" << format_double(slot.grid.lo) << '\n';
  os << name << ".grid_hi=" << format_double(slot.grid.hi) << '\n';
  os << name << ".grid_size=" << slot.grid.size << '\n';
  os << name << ".degree=" << slot.grid.degree << '\n';
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size() || (!v.empty() && v[0] == '-')) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

}  // namespace

std::string model_spec_to_text(const ModelSpec& spec) {
  std::ostringstream os;
  os << "window.length=" << spec.window.length << '\n';
  os << "window.channels=" << spec.window.channels << '\n';
  os << "window.intervals=" << spec.window.intervals << '\n';
  os << "window.interval_length=" << spec.window.interval_length << '\n';
  os << "hidden=" << spec.hidden << '\n';
  os << "classes=" << spec.classes << '\n';
  write_slot(os, "embedding", spec.embedding);
  write_slot(os, "mixer", spec.mixer);
  write_slot(os, "classifier", spec.classifier);
  os << "mixer_depth=" << spec.mixer_depth << '\n';
  os << "expansion=" << spec.expansion << '\n';
  os << "use_fft=" << (spec.use_fft ? "true" : "false") << '\n';
  return os.str();
}

ModelSpec model_spec_from_text(const std::string& text) {
  ModelSpec spec;
  std::istringstream is(text);
  std::string line;
  auto slot_for = [&](const std::string& prefix) -> SlotSpec* {
    if (prefix == "embedding") return &spec.embedding;
    if (prefix == "mixer") return &spec.mixer;
    if (prefix == "classifier") return &spec.classifier;
    return nullptr;
  };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed model spec line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    const auto dot = key.find('.');
    if (key == "window.length") spec.window.length = parse_size(key, value);
    else if (key == "window.channels") spec.window.channels = parse_size(key, value);
    else if (key == "window.intervals") spec.window.intervals = parse_size(key, value);
    else if (key == "window.interval_length") spec.window.interval_length = parse_size(key, value);
    else if (key == "hidden") spec.hidden = parse_size(key, value);
    else if (key == "classes") spec.classes = parse_size(key, value);
    else if (key == "mixer_depth") spec.mixer_depth = parse_size(key, value);
    else if (key == "expansion") spec.expansion = parse_size(key, value);
    else if (key == "use_fft") {
      if (value != "true" && value != "false") throw ConfigError("use_fft expects true/false");
      spec.use_fft = value == "true";
    } else if (SlotSpec* slot = dot == std::string::npos ? nullptr : slot_for(key.substr(0, dot))) {
      const std::string field = key.substr(dot + 1);
      if (field == "kind") {
        auto kind = parse_kind(value);
        if (!kind) throw ConfigError("unknown layer kind '" + value + "'");
        slot->kind = *kind;
      } else if (field == "grid_lo") slot->grid.lo = parse_double(key, value);
      else if (field == "grid_hi") slot->grid.hi = parse_double(key, value);
      else if (field == "grid_size") slot->grid.size = parse_size(key, value);
      else if (field == "degree") slot->grid.degree = parse_size(key, value);
      else throw ConfigError("unknown model spec key '" + key + "'");
    } else {
      throw ConfigError("unknown model spec key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

void save_checkpoint(std::ostream& out, const Model& model) {
  out << "# kanforge model checkpoint\n" << model_spec_to_text(model.spec()) << "---\n";
  write_params(out, model.parameters());
}

Model load_checkpoint(std::istream& in) {
  std::string header, line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      terminated = true;
      break;
    }
    header += line + '\n';
  }
  if (!terminated) throw DataError("checkpoint header is not terminated by '---'");
  Model model(model_spec_from_text(header), 0);
  model.load_parameters(read_params(in));
  return model;
}

}  // namespace kanforge
