#pragma once

// Three-slot KAN-MLP-Mixer classifier for windowed sensor data:
//
//   x [B x L x C] -> split [B x T x tau*C] -> (+ FFT magnitudes)
//     -> data embedding (per token, features -> hidden)
//     -> feature mixer (mixer_depth blocks of token + channel mixing)
//     -> mean over T -> classifier (hidden -> classes, raw logits)
//
// Each slot holds a layer kind. The placement code spells the slots as K
// (any KAN kind) or M (Linear), e.g. "K-M-M". The flagship hybrid is
// efficientkan / linear / larctankan ("K-M-K").

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kanforge/kan_layers.hpp"
#include "kanforge/tensor.hpp"

namespace kanforge {

struct WindowShape {
  std::size_t length = 128;   // L, samples per window
  std::size_t channels = 6;   // C
  std::size_t intervals = 8;  // T
  std::size_t interval_length = 16;  // tau

  /// Throws ConfigError unless T * tau == L and all fields are positive.
  void validate() const;
  bool operator==(const WindowShape&) const = default;
};

/// Layer kind and grid for one slot of the pipeline.
struct SlotSpec {
  LayerKind kind = LayerKind::Linear;
  GridSpec grid = default_grid(LayerKind::Linear);

  static SlotSpec of(LayerKind kind) { return {kind, default_grid(kind)}; }
  char code() const { return kind == LayerKind::Linear ? 'M' : 'K'; }
  bool operator==(const SlotSpec&) const = default;
};

struct ModelSpec {
  WindowShape window{};
  std::size_t hidden = 16;
  std::size_t classes = 2;
  SlotSpec embedding = SlotSpec::of(LayerKind::BSplineKAN);
  SlotSpec mixer = SlotSpec::of(LayerKind::Linear);
  SlotSpec classifier = SlotSpec::of(LayerKind::LarctanKAN);
  std::size_t mixer_depth = 2;
  std::size_t expansion = 2;  // channel-mixing width = expansion * hidden
  bool use_fft = true;

  void validate() const;
  /// "K-M-K" style code derived from the slot kinds.
  std::string placement() const;
  /// Per-token feature width entering the embedding.
  std::size_t token_features() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Parses a placement code ("K-M-M", "kmm" and "K M M" are accepted). K slots
/// take the given per-slot variant, M slots become Linear.
/// Throws ConfigError on anything else.
void apply_placement(ModelSpec& spec, const std::string& code, LayerKind embedding_variant,
                     LayerKind mixer_variant, LayerKind classifier_variant);

/// The flagship hybrid: efficientkan embedding, linear mixer, larctankan head.
ModelSpec hybrid_spec(const WindowShape& window, std::size_t classes, std::size_t hidden = 16);

/// [B x L x C] -> [B x T x tau*C]; interval t holds samples t*tau .. t*tau+tau-1,
/// laid out sample-major then channel (feature s*C + c).
Tensor split_windows(const Tensor& x, const WindowShape& shape);
/// Inverse of split_windows.
Tensor merge_intervals(const Tensor& intervals, const WindowShape& shape);

/// Appends the DFT magnitude spectrum (floor(tau/2)+1 bins per channel,
/// unnormalised) of every interval after its raw samples:
/// [B x T x tau*C] -> [B x T x (tau + floor(tau/2) + 1) * C]. The spectrum
/// block is laid out bin-major then channel and multiplied by `spectrum_scale`.
/// Treated as a constant: no gradient flows through the transform.
Tensor fft_features(const Tensor& intervals, const WindowShape& shape, double spectrum_scale = 1.0);

/// Per-feature standardisation with learnable gain and bias over the last axis.
struct Norm {
  Tensor gain;
  Tensor bias;
  static constexpr double kEps = 1e-9;

  explicit Norm(std::size_t width);
  Tensor forward(const Tensor& x) const;
  std::size_t param_count() const { return gain.numel() + bias.numel(); }
};

struct MixerBlock {
  Norm token_norm;
  Layer token_mix;  // T -> T, applied per hidden feature
  Norm channel_norm;
  Layer channel_up;    // hidden -> expansion * hidden
  Layer channel_down;  // expansion * hidden -> hidden
};

/// Parameter counts split by slot.
struct SlotParams {
  std::size_t embedding = 0;
  std::size_t mixer = 0;
  std::size_t classifier = 0;
  std::size_t total() const { return embedding + mixer + classifier; }
};

class Model {
 public:
  /// Deterministic in (spec, seed). Throws ConfigError on an invalid spec.
  Model(const ModelSpec& spec, std::uint64_t seed);

  /// [B x L x C] -> logits [B x classes].
  Tensor forward(const Tensor& x) const;

  const ModelSpec& spec() const { return spec_; }
  /// Every trainable tensor with a dotted name ("mixer.0.token_mix.weight").
  std::vector<Parameter> parameters() const;
  std::size_t total_params() const { return slot_params().total(); }
  SlotParams slot_params() const;
  /// Forward-pass FLOPs for `batch` windows under the layer counting
  /// convention; norms count 4 per element, residual adds 1.
  std::size_t flops_estimate(std::size_t batch) const;

  /// Deep copy.
  Model clone() const;
  /// Overwrites parameter values from a container; names and shapes must match.
  void load_parameters(const std::vector<Parameter>& params);

  const Layer& embedding() const { return embedding_; }
  const std::vector<MixerBlock>& blocks() const { return blocks_; }
  const Layer& classifier() const { return classifier_; }

 private:
  ModelSpec spec_;
  Layer embedding_;
  std::vector<MixerBlock> blocks_;
  Layer classifier_;
};

/// Layer specs the model instantiates, in parameter order (norms excluded).
std::vector<LayerSpec> model_layer_specs(const ModelSpec& spec);

// Checkpoint: text header of key=value lines describing the ModelSpec,
// terminated by a line "---", followed by the binary parameter container.
std::string model_spec_to_text(const ModelSpec& spec);
/// Throws ConfigError on unknown keys or malformed values.
ModelSpec model_spec_from_text(const std::string& text);
void save_checkpoint(std::ostream& out, const Model& model);
Model load_checkpoint(std::istream& in);

}  // namespace kanforge
