#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kanforge/data.hpp"
#include "kanforge/kan_layers.hpp"
#include "kanforge/mixer_model.hpp"

namespace kanforge {

enum class Monitor { MacroF1, Loss };

struct TrainConfig {
  double lr = 0.001;
  std::size_t max_epochs = 200;
  std::size_t patience = 7;
  std::size_t batch_size = 256;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Monitor monitor = Monitor::MacroF1;

  void validate() const;
};

/// First and second moment buffers, one pair per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update with bias correction at step t (t >= 1). Parameters
/// without a gradient are treated as having a zero gradient. The state is
/// lazily sized on first use; afterwards a size mismatch throws ShapeError.
void adam_step(std::span<const Parameter> params, AdamState& state, std::size_t t, const TrainConfig& cfg);

/// Unweighted mean of per-class F1 = 2PR / (P + R). A class absent from
/// `truth` is skipped; a present class with no true positives scores 0.
double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

/// sqrt(mean((pred - target)^2)).
double rmse(const Tensor& pred, const Tensor& target);

/// Tracks the best monitored value; ties are not improvements.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool maximize);
  /// Records the epoch's value; returns true when it improved on the best.
  bool update(double value);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 if none

 private:
  std::size_t patience_;
  bool maximize_;
  double best_;
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;   // 1-based
  double train_loss = 0;   // sample-weighted mean over the epoch's batches
  double val_loss = 0;
  double val_f1 = 0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  std::size_t epochs_run() const { return epochs.size(); }
};

struct TrainResult {
  Model model;  // best snapshot
  TrainTrace trace;
};

/// Predicted class per window (argmax of logits, first index on ties).
std::vector<int> predict(const Model& model, const HarDataset& ds, std::size_t batch_size = 256);
/// Mean cross-entropy over a dataset.
double evaluate_loss(const Model& model, const HarDataset& ds, std::size_t batch_size = 256);

/// Mini-batch Adam with seeded shuffling and early stopping on the validation
/// metric; returns the best snapshot. Throws TrainingError on empty data or a
/// non-finite loss (message names epoch and step).
TrainResult train(const Model& initial, const HarDataset& train_set, const HarDataset& val_set,
                  const TrainConfig& cfg, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  double metric = 0;  // test macro-F1
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> loss_trace;
};

struct RunReport {
  std::string label;
  std::vector<SeedResult> seeds;
  double mean = 0;
  double stddev = 0;  // population standard deviation over seeds
  std::size_t total_params = 0;
  std::size_t flops = 0;  // forward FLOPs per window

  /// Recomputes mean and stddev from the per-seed metrics.
  void aggregate();
};

/// Runs std::thread workers over indices [0, n) and returns when all finish.
/// fn must not share mutable state between indices.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Default worker count: KANFORGE_WORKERS if set, else hardware concurrency.
std::size_t default_workers();

/// For every seed: build the model, train on split.train with split.val for
/// early stopping, score macro-F1 on split.test. Seeds may run on up to
/// `workers` threads; results are ordered as cfg.seeds.
RunReport run_experiment(const ModelSpec& spec, const DataSplit& split, const TrainConfig& cfg,
                         std::size_t workers = 1, std::vector<Model>* best_models = nullptr);

/// Per-seed rows followed by "mean" and "std" rows:
///   seed,macro_f1,best_epoch,epochs_run,final_train_loss
void write_report_csv(std::ostream& out, const RunReport& report);
/// Human-readable summary.
void write_report_summary(std::ostream& out, const RunReport& report);

// Function fitting -----------------------------------------------------------

struct FitConfig {
  std::size_t steps = 3000;
  double lr = 0.01;
  std::uint64_t seed = 1;
};

struct FitResult {
  double train_rmse = 0;
  double test_rmse = 0;
  std::vector<double> loss_trace;  // every step
};

/// Full-batch Adam on mean squared error. `x` is fed as-is; callers rescale
/// inputs into the basis range first.
FitResult fit_regressor(const Sequential& net, const Tensor& x_train, const Tensor& y_train,
                        const Tensor& x_test, const Tensor& y_test, const FitConfig& cfg);

enum class FitTarget { Step, SinCos };
std::string_view target_name(FitTarget target);
std::optional<FitTarget> parse_target(std::string_view name);

/// One scalar regression experiment: a stack 1 -> widths... -> 1 of one kind
/// trained on a seeded sample of the target.
struct FunctionFitSpec {
  FitTarget target = FitTarget::SinCos;
  LayerKind kind = LayerKind::BSplineKAN;
  std::vector<std::size_t> widths{16};
  std::size_t samples = 1024;
  double test_fraction = 0.2;
  std::size_t steps = 2000;
  double lr = 0.01;
};

/// Hidden widths used when none are given, per target and kind.
std::vector<std::size_t> default_fit_widths(FitTarget target, LayerKind kind);

struct FunctionFitRun {
  std::uint64_t seed = 0;
  std::size_t params = 0;
  double train_rmse = 0;
  double test_rmse = 0;
  std::vector<double> test_x;     // sorted ascending, original domain
  std::vector<double> test_pred;  // model output at test_x
};

/// Samples, splits and initialises from independent streams of `seed`. Inputs
/// are mapped affinely from the target's domain onto [-1, 1].
FunctionFitRun run_function_fit(const FunctionFitSpec& spec, std::uint64_t seed);

}  // namespace kanforge
