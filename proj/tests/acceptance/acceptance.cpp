// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "kanforge/data.hpp"
#include "kanforge/kan_layers.hpp"
#include "kanforge/mixer_model.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"
#include "kanforge/training.hpp"
#include "kanforge_cli/cli.hpp"
#include "oracles.hpp"

using namespace kanforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct FitSummary {
  std::size_t params = 0;
  double mean_rmse = 0;
};

FitSummary fit_mean(FitTarget target, LayerKind kind) {
  FunctionFitSpec spec;
  spec.target = target;
  spec.kind = kind;
  spec.widths = default_fit_widths(target, kind);
  FitSummary s;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const FunctionFitRun run = run_function_fit(spec, seed);
    s.params = run.params;
    s.mean_rmse += run.test_rmse / 5.0;
  }
  return s;
}

void criterion_sincos() {
  const auto t0 = Clock::now();
  const FitSummary kan = fit_mean(FitTarget::SinCos, LayerKind::BSplineKAN);
  const FitSummary mlp = fit_mean(FitTarget::SinCos, LayerKind::Linear);
  const FitSummary arc = fit_mean(FitTarget::SinCos, LayerKind::LarctanKAN);
  const double secs = seconds_since(t0);
  const auto matched = [&](std::size_t p) {
    return std::abs(static_cast<double>(p) - static_cast<double>(kan.params)) <= 0.1 * static_cast<double>(kan.params);
  };
  const bool ok = kan.params <= 6000 && kan.mean_rmse <= 0.01 && kan.mean_rmse < mlp.mean_rmse &&
                  kan.mean_rmse < arc.mean_rmse && matched(mlp.params) && matched(arc.params) && secs < 60.0;
  report(1, ok,
         "sincos test RMSE (mean of seeds 1-5): efficientkan " + fmt("%.5f", kan.mean_rmse) + " (" +
             std::to_string(kan.params) + " params) vs linear " + fmt("%.5f", mlp.mean_rmse) + " (" +
             std::to_string(mlp.params) + ") vs larctankan " + fmt("%.5f", arc.mean_rmse) + " (" +
             std::to_string(arc.params) + "); " + fmt("%.1f", secs) + " s");
}

void criterion_step() {
  const auto t0 = Clock::now();
  const FitSummary arc = fit_mean(FitTarget::Step, LayerKind::LarctanKAN);
  const FitSummary kan = fit_mean(FitTarget::Step, LayerKind::BSplineKAN);
  const double secs = seconds_since(t0);
  const bool ok = arc.params <= 600 && arc.mean_rmse <= 0.05 && kan.params >= 5 * arc.params &&
                  arc.mean_rmse < kan.mean_rmse && secs < 60.0;
  report(2, ok,
         "step test RMSE (mean of seeds 1-5): larctankan " + fmt("%.5f", arc.mean_rmse) + " (" +
             std::to_string(arc.params) + " params) vs efficientkan " + fmt("%.5f", kan.mean_rmse) + " (" +
             std::to_string(kan.params) + "); " + fmt("%.1f", secs) + " s");
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  const LayerKind kinds[] = {LayerKind::Linear, LayerKind::BSplineKAN, LayerKind::FastKAN,
                             LayerKind::WavKAN, LayerKind::FourierKAN, LayerKind::LarctanKAN};
  double worst = 0.0;
  for (LayerKind kind : kinds) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      LayerSpec spec{kind, 3, 2, default_grid(kind), Activation::Identity};
      Layer layer(spec, seed);
      Rng rng(seed + 1000);
      for (auto& p : layer.params().tensors)
        for (double& v : p.value.mutable_data()) v += rng.uniform(-0.3, 0.3);
      Tensor x = oracle::random_tensor({4, 3}, rng, -0.95, 0.95);
      std::vector<Tensor> leaves{x};
      for (auto& p : layer.params().tensors) leaves.push_back(p.value);
      worst = std::max(worst, grad_check([&] { return sum_all(square(layer.forward(x))); }, leaves, 1e-5));
    }
  }
  const WindowShape w{8, 2, 2, 4};
  const ModelSpec hybrid = hybrid_spec(w, 3, 6);
  const std::vector<int> labels{0, 2, 1};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Model model(hybrid, seed);
    Rng rng(seed + 2000);
    std::vector<Tensor> leaves;
    for (const auto& p : model.parameters()) {
      Tensor t = p.value;
      for (double& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
      leaves.push_back(t);
    }
    Tensor x = oracle::random_tensor({3, 8, 2}, rng, -1.5, 1.5, false);
    worst = std::max(worst, grad_check([&] { return softmax_cross_entropy(model.forward(x), labels); }, leaves, 1e-5));
  }
  const double secs = seconds_since(t0);
  report(3, worst < 1e-4 && secs < 30.0,
         "max relative gradient error " + fmt("%.2e", worst) + " over 6 kinds and the hybrid, 5 trials each; " +
             fmt("%.1f", secs) + " s");
}

void criterion_splines() {
  Rng rng(4);
  double unity = 0.0, oracle_err = 0.0;
  for (std::size_t k : {1u, 2u, 3u}) {
    for (std::size_t g : {3u, 5u, 8u}) {
      const GridSpec grid{-1.0, 1.0, g, k};
      const auto knots = oracle::uniform_knots(-1.0, 1.0, g, k);
      std::vector<double> xs(1000);
      for (double& x : xs) {
        do x = rng.uniform(-1.0, 1.0);
        while (x == -1.0);
      }
      const Tensor b = bspline_basis(Tensor({1000}, xs), grid);
      const std::size_t nb = g + k;
      for (std::size_t i = 0; i < 1000; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < nb; ++j) {
          const double v = b.data()[i * nb + j];
          s += v;
          oracle_err = std::max(oracle_err, std::abs(v - oracle::cox_de_boor(knots, j, k, xs[i])));
        }
        unity = std::max(unity, std::abs(s - 1.0));
      }
    }
  }
  report(4, unity < 1e-9 && oracle_err < 1e-12,
         "partition of unity max error " + fmt("%.2e", unity) + ", max deviation from recursive oracle " +
             fmt("%.2e", oracle_err));
}

void criterion_metrics() {
  Rng rng(5);
  double f1_err = 0.0, rmse_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.below(7);
    const std::size_t n = 1 + rng.below(200);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(classes));
      truth[i] = static_cast<int>(rng.below(classes));
    }
    f1_err = std::max(f1_err, std::abs(macro_f1(pred, truth, classes) - oracle::macro_f1(pred, truth, classes)));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-5, 5);
      b[i] = rng.uniform(-5, 5);
    }
    rmse_err = std::max(rmse_err, std::abs(rmse(Tensor({n}, a), Tensor({n}, b)) - oracle::rmse(a, b)));
  }
  report(5, f1_err < 1e-12 && rmse_err < 1e-12,
         "macro-F1 max deviation " + fmt("%.2e", f1_err) + ", rmse max deviation " + fmt("%.2e", rmse_err) +
             " over 100 instances");
}

void criterion_params() {
  const LayerKind kinds[] = {LayerKind::Linear, LayerKind::BSplineKAN, LayerKind::FastKAN,
                             LayerKind::WavKAN, LayerKind::FourierKAN, LayerKind::LarctanKAN};
  Rng rng(6);
  int mismatches = 0;
  for (int c = 0; c < 50; ++c) {
    LayerSpec s;
    s.kind = kinds[c % 6];
    s.fan_in = 1 + rng.below(16);
    s.fan_out = 1 + rng.below(16);
    s.grid = GridSpec{-1.0, 1.0, 2 + rng.below(7), rng.below(4)};
    if (param_count(s) != init_layer(s, static_cast<std::uint64_t>(c)).total_size()) ++mismatches;
  }
  LayerSpec kan{LayerKind::BSplineKAN, 16, 16, GridSpec{-1.0, 1.0, 5, 3}, Activation::Identity};
  LayerSpec lin{LayerKind::Linear, 16, 16, GridSpec{}, Activation::Identity};
  const double ratio = static_cast<double>(param_count(kan)) / static_cast<double>(param_count(lin));
  // Without the bias the ratio is exactly 1 + G + k.
  const double weight_ratio = static_cast<double>(param_count(kan)) / (16.0 * 16.0);

  const WindowShape w{64, 3, 4, 16};
  const ModelSpec hyb = hybrid_spec(w, 4);
  ModelSpec mmm = hyb;
  apply_placement(mmm, "M-M-M", LayerKind::BSplineKAN, LayerKind::BSplineKAN, LayerKind::LarctanKAN);
  const SlotParams a = Model(hyb, 1).slot_params();
  const SlotParams b = Model(mmm, 1).slot_params();
  const auto hs = model_layer_specs(hyb);
  const auto ms = model_layer_specs(mmm);
  const std::size_t excess =
      (param_count(hs.front()) - param_count(ms.front())) + (param_count(hs.back()) - param_count(ms.back()));
  const double exact = 9.0 * 256.0 / (256.0 + 16.0);
  const bool ok = mismatches == 0 && weight_ratio == 9.0 && std::abs(ratio - exact) < 1e-12 && a.mixer == b.mixer &&
                  a.total() - b.total() == excess;
  report(6, ok,
         std::to_string(50 - mismatches) + "/50 closed forms match; efficientkan/linear ratio " + fmt("%.3f", ratio) +
             " = (1+G+k) fi fo / (fi fo + fo), " + fmt("%.1f", weight_ratio) + " on weights alone; hybrid excess " + std::to_string(a.total() - b.total()) +
             " = embedding + classifier, mixer " + std::to_string(a.mixer) + " vs " + std::to_string(b.mixer));
}

struct HarResults {
  RunReport hybrid, mmm, mkm;
};

DataSplit synthetic_split() {
  SynthHarConfig cfg;
  cfg.classes = 4;
  cfg.subjects = 8;
  cfg.shape = WindowShape{64, 3, 4, 16};
  cfg.noise_sigma = 0.5;
  return holdout_split(gen_synth_har(cfg), 0.25, 1);
}

void criterion_training(const DataSplit& split, HarResults& res) {
  const auto t0 = Clock::now();
  const TrainConfig cfg;
  res.hybrid = run_experiment(hybrid_spec(split.train.shape, 4), split, cfg, default_workers());
  const double secs = seconds_since(t0);
  report(7, res.hybrid.mean >= 0.90 && secs < 300.0,
         "hybrid mean test macro-F1 " + fmt("%.4f", res.hybrid.mean) + " +- " + fmt("%.4f", res.hybrid.stddev) +
             " over seeds 1-5; " + fmt("%.1f", secs) + " s");
}

void criterion_ablation(const DataSplit& split, HarResults& res) {
  const TrainConfig cfg;
  ModelSpec mmm = hybrid_spec(split.train.shape, 4);
  apply_placement(mmm, "M-M-M", LayerKind::BSplineKAN, LayerKind::BSplineKAN, LayerKind::LarctanKAN);
  ModelSpec mkm = mmm;
  apply_placement(mkm, "M-K-M", LayerKind::BSplineKAN, LayerKind::BSplineKAN, LayerKind::LarctanKAN);
  res.mmm = run_experiment(mmm, split, cfg, default_workers());
  res.mkm = run_experiment(mkm, split, cfg, default_workers());
  const bool ok = res.hybrid.mean >= res.mmm.mean - 0.02 && res.mkm.mean <= res.mmm.mean;
  report(8, ok,
         "mean macro-F1 hybrid " + fmt("%.4f", res.hybrid.mean) + ", M-M-M " + fmt("%.4f", res.mmm.mean) +
             ", M-K-M efficientkan " + fmt("%.4f", res.mkm.mean));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "kanforge_acceptance";
  fs::remove_all(root);
  const std::vector<std::string> tiny{"--seed", "3", "--set", "data.subjects=4", "--set", "data.windows_per_subject=40",
                                      "--set", "train.epochs=4"};
  struct Command {
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  std::vector<Command> commands{
      {{"fit-function", "--target", "step", "--model", "larctankan", "--steps", "200", "--seed", "3"},
       {"rmse.csv", "predictions.csv"}},
      {{"train", "--placement", "hybrid"}, {"report.csv", "summary.txt"}},
      {{"ablate", "--placements", "K-M-M,hybrid,M-M-M"}, {"ablation.csv"}},
      {{"scaling", "--set", "scaling.grid_sizes=1,3", "--set", "scaling.hidden=8"}, {"scaling.csv"}},
  };
  int identical = 0, total = 0;
  bool all_ran = true;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto args = commands[i].args;
    if (args.front() != "fit-function") args.insert(args.end(), tiny.begin(), tiny.end());
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / (std::to_string(i) + "_" + std::to_string(rep));
      auto run_args = args;
      run_args.insert(run_args.end(), {"--out", dir.string()});
      std::ostringstream out, err;
      if (cli::run(run_args, out, err) != cli::kExitOk) all_ran = false;
      for (const auto& f : commands[i].files) outputs[rep] += slurp(dir / f) + '\x1e';
    }
    ++total;
    if (!outputs[0].empty() && outputs[0] == outputs[1]) ++identical;
  }
  fs::remove_all(root);
  report(9, all_ran && identical == total,
         std::to_string(identical) + "/" + std::to_string(total) +
             " commands (fit-function, train, ablate, scaling) rerun to byte-identical tables");
}

}  // namespace

int main() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  const auto run = [](int id, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("raised: ") + e.what());
    }
  };
  run(1, criterion_sincos);
  run(2, criterion_step);
  run(3, criterion_gradients);
  run(4, criterion_splines);
  run(5, criterion_metrics);
  run(6, criterion_params);
  HarResults har;
  DataSplit split;
  run(7, [&] {
    split = synthetic_split();
    criterion_training(split, har);
  });
  run(8, [&] { criterion_ablation(split, har); });
  run(9, criterion_determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
