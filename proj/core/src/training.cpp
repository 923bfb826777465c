#include "kanforge/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include "kanforge/error.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"

namespace kanforge {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

void adam_step(std::span<const Parameter> params, AdamState& state, std::size_t t, const TrainConfig& cfg) {
  if (t == 0) throw ConfigError("Adam step index starts at 1");
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.numel(), 0.0);
      state.v.emplace_back(p.value.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("Adam state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor value = params[i].value;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != value.numel() || v.size() != value.numel()) {
      throw ShapeError("Adam state for '" + params[i].name + "' does not match its shape");
    }
    const auto grad = value.grad();
    auto data = value.mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      data[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  if (pred.size() != truth.size()) {
    throw ShapeError("macro_f1: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0), support(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], y = truth[i];
    if (p < 0 || y < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(y) >= classes) {
      throw DataError("macro_f1: label out of range for " + std::to_string(classes) + " classes");
    }
    ++support[y];
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (support[c] == 0) continue;
    ++counted;
    if (tp[c] == 0) continue;
    const double precision = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
    const double recall = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    total += 2.0 * precision * recall / (precision + recall);
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double rmse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("rmse shapes differ: " + shape_to_string(pred.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  const auto a = pred.data();
  const auto b = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

EarlyStopping::EarlyStopping(std::size_t patience, bool maximize)
    : patience_(patience),
      maximize_(maximize),
      best_(maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(double value) {
  ++epoch_;
  const bool improved = maximize_ ? value > best_ : value < best_;
  if (improved) {
    best_ = value;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return improved;
}

namespace {

Tensor gather_windows(const HarDataset& ds, std::span<const std::size_t> idx, std::vector<int>& labels) {
  const std::size_t per = ds.shape.length * ds.shape.channels;
  const auto src = ds.windows.data();
  std::vector<double> values(idx.size() * per);
  labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + idx[i] * per, per, values.begin() + i * per);
    labels[i] = ds.labels[idx[i]];
  }
  return Tensor({idx.size(), ds.shape.length, ds.shape.channels}, std::move(values));
}

struct Evaluation {
  double loss = 0;
  std::vector<int> pred;
};

Evaluation evaluate(const Model& model, const HarDataset& ds, std::size_t batch_size) {
  NoGradGuard no_grad;
  Evaluation ev;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  const std::size_t classes = model.spec().classes;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Tensor logits = model.forward(gather_windows(ds, idx, labels));
    ev.loss += softmax_cross_entropy(logits, labels).item() * static_cast<double>(end - start);
    const auto z = logits.data();
    for (std::size_t r = 0; r < end - start; ++r) {
      const double* row = z.data() + r * classes;
      ev.pred.push_back(static_cast<int>(std::max_element(row, row + classes) - row));
    }
  }
  if (ds.size() > 0) ev.loss /= static_cast<double>(ds.size());
  return ev;
}

std::vector<std::vector<double>> snapshot(const std::vector<Parameter>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void restore(const std::vector<Parameter>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].value;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

std::vector<int> predict(const Model& model, const HarDataset& ds, std::size_t batch_size) {
  return evaluate(model, ds, batch_size).pred;
}

double evaluate_loss(const Model& model, const HarDataset& ds, std::size_t batch_size) {
  return evaluate(model, ds, batch_size).loss;
}

TrainResult train(const Model& initial, const HarDataset& train_set, const HarDataset& val_set,
                  const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train_set.size() == 0) throw TrainingError("training set is empty");
  if (val_set.size() == 0) throw TrainingError("validation set is empty");
  Model model = initial.clone();
  const auto params = model.parameters();
  AdamState state;
  std::size_t step = 0;
  Rng rng(derive_seed(seed, 0x5f0ff1e));
  const bool maximize = cfg.monitor == Monitor::MacroF1;
  EarlyStopping stopper(cfg.patience, maximize);
  auto best = snapshot(params);
  TrainTrace trace;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<int> labels;
  Tape& tape = Tape::current();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Tensor xb = gather_windows(train_set, std::span(order).subspan(start, end - start), labels);
      tape.clear();
      for (const auto& p : params) Tensor(p.value).zero_grad();
      const Tensor loss = softmax_cross_entropy(model.forward(xb), labels);
      if (!std::isfinite(loss.item())) {
        tape.clear();
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step + 1));
      }
      backward(loss);
      adam_step(params, state, ++step, cfg);
      loss_sum += loss.item() * static_cast<double>(end - start);
    }
    const Evaluation ev = evaluate(model, val_set, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = ev.loss;
    rec.val_f1 = macro_f1(ev.pred, val_set.labels, model.spec().classes);
    trace.epochs.push_back(rec);
    if (stopper.update(maximize ? rec.val_f1 : rec.val_loss)) best = snapshot(params);
    if (stopper.should_stop()) break;
  }
  restore(params, best);
  trace.best_epoch = stopper.best_epoch();
  trace.best_metric = stopper.best();
  return {std::move(model), std::move(trace)};
}

void RunReport::aggregate() {
  if (seeds.empty()) {
    mean = stddev = 0.0;
    return;
  }
  double total = 0.0;
  for (const auto& s : seeds) total += s.metric;
  mean = total / static_cast<double>(seeds.size());
  double var = 0.0;
  for (const auto& s : seeds) var += (s.metric - mean) * (s.metric - mean);
  stddev = std::sqrt(var / static_cast<double>(seeds.size()));
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t default_workers() {
  if (const char* env = std::getenv("KANFORGE_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

RunReport run_experiment(const ModelSpec& spec, const DataSplit& split, const TrainConfig& cfg, std::size_t workers,
                         std::vector<Model>* best_models) {
  cfg.validate();
  spec.validate();
  RunReport report;
  report.label = spec.placement();
  report.seeds.resize(cfg.seeds.size());
  std::vector<std::optional<Model>> models(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    try {
      TrainResult result = train(Model(spec, seed), split.train, split.val, cfg, seed);
      SeedResult& out = report.seeds[i];
      out.seed = seed;
      out.metric = macro_f1(predict(result.model, split.test, cfg.batch_size), split.test.labels, spec.classes);
      out.best_epoch = result.trace.best_epoch;
      out.epochs_run = result.trace.epochs_run();
      for (const auto& e : result.trace.epochs) out.loss_trace.push_back(e.train_loss);
      if (best_models) models[i] = std::move(result.model);
    } catch (const Error& e) {
      throw TrainingError("seed " + std::to_string(seed) + ": " + e.what());
    }
  });
  report.aggregate();
  const Model probe(spec, cfg.seeds.front());
  report.total_params = probe.total_params();
  report.flops = probe.flops_estimate(1);
  if (best_models) {
    best_models->clear();
    for (auto& m : models) best_models->push_back(std::move(*m));
  }
  return report;
}

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "seed,macro_f1,best_epoch,epochs_run,final_train_loss\n";
  for (const auto& s : report.seeds) {
    const double final_loss = s.loss_trace.empty() ? 0.0 : s.loss_trace.back();
    out << s.seed << ',' << fmt("%.6f", s.metric) << ',' << s.best_epoch << ',' << s.epochs_run << ','
        << fmt("%.6f", final_loss) << '\n';
  }
  out << "mean," << fmt("%.6f", report.mean) << ",,,\n";
  out << "std," << fmt("%.6f", report.stddev) << ",,,\n";
}

void write_report_summary(std::ostream& out, const RunReport& report) {
  out << "configuration: " << report.label << '\n';
  out << "seeds: " << report.seeds.size() << '\n';
  out << "macro_f1: " << fmt("%.4f", report.mean) << " +- " << fmt("%.4f", report.stddev) << '\n';
  out << "parameters: " << report.total_params << '\n';
  out << "flops_per_window: " << report.flops << '\n';
  for (const auto& s : report.seeds) {
    out << "  seed " << s.seed << ": macro_f1=" << fmt("%.4f", s.metric) << " best_epoch=" << s.best_epoch
        << " epochs=" << s.epochs_run << '\n';
  }
}

FitResult fit_regressor(const Sequential& net, const Tensor& x_train, const Tensor& y_train, const Tensor& x_test,
                        const Tensor& y_test, const FitConfig& cfg) {
  const auto params = net.parameters();
  TrainConfig adam;
  adam.lr = cfg.lr;
  AdamState state;
  FitResult result;
  Tape& tape = Tape::current();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    tape.clear();
    for (const auto& p : params) Tensor(p.value).zero_grad();
    const Tensor loss = mse_loss(net.forward(x_train), y_train);
    if (!std::isfinite(loss.item())) {
      tape.clear();
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
    result.loss_trace.push_back(loss.item());
    backward(loss);
    adam_step(params, state, step, adam);
  }
  NoGradGuard no_grad;
  result.train_rmse = rmse(net.forward(x_train), y_train);
  result.test_rmse = rmse(net.forward(x_test), y_test);
  return result;
}

std::string_view target_name(FitTarget target) {
  return target == FitTarget::Step ? "step" : "sincos";
}

std::optional<FitTarget> parse_target(std::string_view name) {
  if (name == "step") return FitTarget::Step;
  if (name == "sincos") return FitTarget::SinCos;
  return std::nullopt;
}

std::vector<std::size_t> default_fit_widths(FitTarget target, LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return {15, 15};
    case LayerKind::BSplineKAN: return target == FitTarget::Step ? std::vector<std::size_t>{45} : std::vector<std::size_t>{16};
    case LayerKind::FastKAN: return {18};
    case LayerKind::WavKAN: return {48};
    case LayerKind::FourierKAN: return {14};
    case LayerKind::LarctanKAN: return target == FitTarget::Step ? std::vector<std::size_t>{10, 10} : std::vector<std::size_t>{14, 14};
  }
  return {16};
}

namespace {

Tensor to_unit_range(const Tensor& x, double lo, double hi) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& a : v) a = -1.0 + 2.0 * (a - lo) / (hi - lo);
  return Tensor(x.shape(), std::move(v));
}

}  // namespace

FunctionFitRun run_function_fit(const FunctionFitSpec& spec, std::uint64_t seed) {
  if (spec.samples < 2) throw ConfigError("function fit needs at least 2 samples");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  const bool step = spec.target == FitTarget::Step;
  const FunctionDataset ds =
      step ? gen_step(spec.samples, derive_seed(seed, 1)) : gen_sincos(spec.samples, derive_seed(seed, 1));
  const auto [train_set, test_set] = split_function_dataset(ds, spec.test_fraction, derive_seed(seed, 2));
  const double lo = step ? -1.0 : 0.0, hi = 1.0;
  const Sequential net = make_stack(spec.kind, 1, spec.widths, 1, default_grid(spec.kind), derive_seed(seed, 3));
  const Tensor x_train = to_unit_range(train_set.x, lo, hi);
  const Tensor x_test = to_unit_range(test_set.x, lo, hi);
  FitConfig cfg;
  cfg.steps = spec.steps;
  cfg.lr = spec.lr;
  cfg.seed = seed;
  const FitResult fit = fit_regressor(net, x_train, train_set.y, x_test, test_set.y, cfg);

  FunctionFitRun run;
  run.seed = seed;
  run.params = net.param_count();
  run.train_rmse = fit.train_rmse;
  run.test_rmse = fit.test_rmse;
  Tensor pred;
  {
    NoGradGuard no_grad;
    pred = net.forward(x_test);
  }
  std::vector<std::size_t> order(test_set.x.numel());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return test_set.x.data()[a] < test_set.x.data()[b]; });
  for (std::size_t i : order) {
    run.test_x.push_back(test_set.x.data()[i]);
    run.test_pred.push_back(pred.data()[i]);
  }
  return run;
}

}  // namespace kanforge
