#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "kanforge/data.hpp"
#include "kanforge/error.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"
#include "kanforge/training.hpp"
#include "oracles.hpp"

using namespace kanforge;

namespace {

// Two classes whose windows sit around -1 and +1 on every channel.
HarDataset toy_set(std::size_t per_subject, std::size_t subjects, std::uint64_t seed) {
  const WindowShape w{8, 2, 2, 4};
  Rng rng(seed);
  HarDataset ds;
  ds.shape = w;
  ds.classes = 2;
  std::vector<double> v;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t i = 0; i < per_subject; ++i) {
      const int label = static_cast<int>(i % 2);
      const double centre = label == 0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < 16; ++j) v.push_back(centre + rng.uniform(-0.3, 0.3));
      ds.labels.push_back(label);
      ds.subjects.push_back(static_cast<int>(s));
    }
  }
  ds.windows = Tensor({ds.labels.size(), 8, 2}, std::move(v));
  return ds;
}

ModelSpec toy_spec(const char* placement) {
  ModelSpec s;
  s.window = WindowShape{8, 2, 2, 4};
  s.classes = 2;
  s.hidden = 6;
  s.mixer_depth = 1;
  apply_placement(s, placement, LayerKind::BSplineKAN, LayerKind::BSplineKAN, LayerKind::LarctanKAN);
  return s;
}

bool same_params(const std::vector<Parameter>& a, const std::vector<Parameter>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(a[i].value.data().data(), b[i].value.data().data(), a[i].value.numel() * 8) != 0) return false;
  return true;
}

std::vector<double> as_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.lr == 0.001);
  CHECK(cfg.max_epochs == 200);
  CHECK(cfg.patience == 7);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::vector({0.3, -1.2, 4.0}, true);
  const std::vector<Parameter> params{{"p", p}};
  AdamState state;
  TrainConfig cfg;
  const auto before = as_vector(p);
  for (std::size_t t = 1; t <= 3; ++t) adam_step(params, state, t, cfg);
  CHECK(as_vector(p) == before);
}

TEST_CASE("adam: first step with unit gradient moves by lr") {
  Tensor p = Tensor::scalar(2.0, true);
  backward(p);  // d p / d p = 1
  const std::vector<Parameter> params{{"p", p}};
  AdamState state;
  TrainConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, state, 1, cfg);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  CHECK(std::abs(p.item() - (2.0 - 0.01 / (1.0 + 1e-8))) < 1e-15);
}

TEST_CASE("adam: state shape mismatch is rejected") {
  Tensor a = Tensor::vector({1, 2}, true);
  AdamState state;
  TrainConfig cfg;
  const std::vector<Parameter> one{{"a", a}};
  adam_step(one, state, 1, cfg);
  Tensor b = Tensor::vector({1, 2, 3}, true);
  const std::vector<Parameter> other{{"b", b}};
  CHECK_THROWS_AS(adam_step(other, state, 2, cfg), ShapeError);
  const std::vector<Parameter> two{{"a", a}, {"b", b}};
  CHECK_THROWS_AS(adam_step(two, state, 2, cfg), ShapeError);
}

TEST_CASE("adam: identical runs give identical trajectories") {
  auto run = [] {
    Rng rng(3);
    Tensor w = oracle::random_tensor({4, 3}, rng);
    Tensor x = oracle::random_tensor({5, 3}, rng, -1, 1, false);
    const std::vector<Parameter> params{{"w", w}};
    AdamState state;
    TrainConfig cfg;
    cfg.lr = 0.05;
    std::vector<double> traj;
    for (std::size_t t = 1; t <= 20; ++t) {
      w.zero_grad();
      backward(mean_all(square(sin(matmul_transposed(x, w)))));
      adam_step(params, state, t, cfg);
      traj.insert(traj.end(), w.data().begin(), w.data().end());
    }
    return traj;
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

TEST_CASE("early stopping counts stale epochs and ignores ties") {
  EarlyStopping es(1, true);
  CHECK(es.update(0.5));
  CHECK_FALSE(es.should_stop());
  CHECK_FALSE(es.update(0.5));
  CHECK(es.should_stop());
  CHECK(es.best_epoch() == 1);

  EarlyStopping loss(2, false);
  CHECK(loss.update(3.0));
  CHECK(loss.update(2.0));
  CHECK_FALSE(loss.update(2.5));
  CHECK_FALSE(loss.should_stop());
  CHECK(loss.update(1.0));
  CHECK(loss.best() == 1.0);
  CHECK(loss.best_epoch() == 4);
}

TEST_CASE("training stops after one stale epoch with patience 1") {
  const HarDataset tr = toy_set(20, 2, 1);
  const HarDataset va = toy_set(10, 1, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;  // the validation metric can never improve after epoch 1
  cfg.patience = 1;
  cfg.batch_size = 8;
  const TrainResult r = train(Model(toy_spec("M-M-M"), 1), tr, va, cfg, 1);
  CHECK(r.trace.epochs_run() == 2);
  CHECK(r.trace.best_epoch == 1);
  CHECK(r.trace.epochs[0].train_loss == doctest::Approx(r.trace.epochs[1].train_loss).epsilon(1e-12));
}

TEST_CASE("zero learning rate keeps parameters and loss fixed") {
  const HarDataset tr = toy_set(20, 2, 1);
  const HarDataset va = toy_set(10, 1, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.patience = 3;
  cfg.batch_size = 8;
  const Model init(toy_spec("K-M-K"), 2);
  const TrainResult r = train(init, tr, va, cfg, 1);
  CHECK(same_params(init.parameters(), r.model.parameters()));
  // Constant up to the summation order of the shuffled batches.
  for (const auto& e : r.trace.epochs) CHECK(e.train_loss == doctest::Approx(r.trace.epochs.front().train_loss).epsilon(1e-12));
}

TEST_CASE("toy problem: training loss strictly decreases over the first epochs") {
  const HarDataset tr = toy_set(40, 3, 1);
  const HarDataset va = toy_set(20, 1, 2);
  TrainConfig cfg;
  cfg.lr = 0.003;
  cfg.batch_size = 16;
  cfg.patience = 50;
  cfg.max_epochs = 5;
  for (const char* placement : {"M-M-M", "K-M-K"}) {
    CAPTURE(placement);
    const TrainResult r = train(Model(toy_spec(placement), 1), tr, va, cfg, 4);
    REQUIRE(r.trace.epochs_run() == 5);
    for (std::size_t e = 1; e < 5; ++e) CHECK(r.trace.epochs[e].train_loss < r.trace.epochs[e - 1].train_loss);
  }
}

TEST_CASE("best snapshot is never worse than any epoch seen") {
  const HarDataset tr = toy_set(30, 3, 5);
  const HarDataset va = toy_set(30, 1, 6);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 12;
  cfg.patience = 4;
  const TrainResult r = train(Model(toy_spec("K-M-K"), 3), tr, va, cfg, 2);
  double best = -1.0;
  for (const auto& e : r.trace.epochs) best = std::max(best, e.val_f1);
  CHECK(r.trace.best_metric == best);
  const auto pred = predict(r.model, va);
  CHECK(macro_f1(pred, va.labels, 2) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("same seed gives an identical trace") {
  const HarDataset tr = toy_set(30, 2, 7);
  const HarDataset va = toy_set(10, 1, 8);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 8;
  cfg.max_epochs = 4;
  const Model init(toy_spec("K-M-K"), 4);
  const TrainResult a = train(init, tr, va, cfg, 9);
  const TrainResult b = train(init, tr, va, cfg, 9);
  REQUIRE(a.trace.epochs_run() == b.trace.epochs_run());
  for (std::size_t e = 0; e < a.trace.epochs_run(); ++e) {
    CHECK(a.trace.epochs[e].train_loss == b.trace.epochs[e].train_loss);
    CHECK(a.trace.epochs[e].val_loss == b.trace.epochs[e].val_loss);
  }
  CHECK(same_params(a.model.parameters(), b.model.parameters()));
}

TEST_CASE("training errors") {
  const HarDataset tr = toy_set(10, 2, 1);
  HarDataset empty = subset(tr, {});
  TrainConfig cfg;
  cfg.max_epochs = 2;
  const Model init(toy_spec("M-M-M"), 1);
  CHECK_THROWS_AS(train(init, empty, tr, cfg, 1), TrainingError);
  CHECK_THROWS_AS(train(init, tr, empty, cfg, 1), TrainingError);
  HarDataset bad = subset(tr, {0, 1, 2, 3});
  bad.windows.mutable_data()[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(Model(toy_spec("K-M-K"), 1), bad, tr, cfg, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("macro F1 examples") {
  const std::vector<int> p{0, 0, 1, 1}, t{0, 1, 0, 1};
  CHECK(macro_f1(p, t, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(macro_f1(t, t, 2) == 1.0);
  const std::vector<int> five{0, 1, 2, 3, 4, 4};
  CHECK(macro_f1(five, five, 5) == 1.0);
  // Class 2 is absent from truth and skipped; class 1 is present with no hits.
  const std::vector<int> pt{0, 0, 2}, tt{0, 1, 1};
  CHECK(macro_f1(pt, tt, 3) == doctest::Approx(oracle::macro_f1(pt, tt, 3)).epsilon(1e-15));
  CHECK(macro_f1(pt, tt, 3) == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0).epsilon(1e-15));
  const std::vector<int> shorter{0};
  CHECK_THROWS_AS(macro_f1(shorter, t, 2), ShapeError);
}

TEST_CASE("macro F1 agrees with a brute-force oracle and is relabel invariant") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(6));
      truth[i] = static_cast<int>(rng.below(6));
    }
    const double f = macro_f1(pred, truth, 6);
    CHECK(std::abs(f - oracle::macro_f1(pred, truth, 6)) < 1e-12);
    CHECK((f >= 0.0 && f <= 1.0));
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle<int>(perm);
    std::vector<int> rp(n), rt(n);
    for (std::size_t i = 0; i < n; ++i) {
      rp[i] = perm[pred[i]];
      rt[i] = perm[truth[i]];
    }
    CHECK(std::abs(macro_f1(rp, rt, 6) - f) < 1e-12);
  }
}

TEST_CASE("rmse examples") {
  Tensor a = Tensor::vector({1, 2, 3});
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(Tensor::vector({3, 4, 5}), a) == 2.0);
  CHECK_THROWS_AS(rmse(a, Tensor::vector({1, 2})), ShapeError);
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = oracle::random_tensor({50, 1}, rng, -3, 3, false);
    Tensor q = oracle::random_tensor({50, 1}, rng, -3, 3, false);
    CHECK(std::abs(rmse(p, q) - oracle::rmse(as_vector(p), as_vector(q))) < 1e-12);
  }
}

TEST_CASE("report aggregate is recomputable") {
  RunReport r;
  for (double m : {0.8, 0.9, 0.75, 0.95, 0.85}) r.seeds.push_back({1, m, 1, 1, {}});
  r.aggregate();
  CHECK(std::abs(r.mean - 0.85) < 1e-12);
  double var = 0.0;
  for (const auto& s : r.seeds) var += (s.metric - 0.85) * (s.metric - 0.85);
  CHECK(std::abs(r.stddev - std::sqrt(var / 5.0)) < 1e-12);
  std::ostringstream csv;
  write_report_csv(csv, r);
  CHECK(csv.str().rfind("seed,macro_f1,best_epoch,epochs_run,final_train_loss\n", 0) == 0);
  CHECK(csv.str().find("\nmean,") != std::string::npos);
  CHECK(csv.str().find("\nstd,") != std::string::npos);
}

TEST_CASE("run_experiment with one seed and repeatability") {
  SynthHarConfig data;
  data.classes = 3;
  data.subjects = 5;
  data.windows_per_subject = 12;
  data.shape = WindowShape{16, 2, 2, 8};
  const DataSplit split = holdout_split(gen_synth_har(data), 0.25, 1);
  ModelSpec spec = hybrid_spec(data.shape, 3, 6);
  spec.mixer_depth = 1;
  TrainConfig cfg;
  cfg.seeds = {1};
  cfg.lr = 0.01;
  cfg.max_epochs = 4;
  cfg.batch_size = 16;
  const RunReport one = run_experiment(spec, split, cfg);
  REQUIRE(one.seeds.size() == 1);
  CHECK(one.mean == one.seeds[0].metric);
  CHECK(one.stddev == 0.0);
  CHECK(one.total_params == Model(spec, 1).total_params());
  CHECK(one.flops == Model(spec, 1).flops_estimate(1));

  cfg.seeds = {1, 2};
  const RunReport a = run_experiment(spec, split, cfg);
  const RunReport b = run_experiment(spec, split, cfg, 2);
  REQUIRE(a.seeds.size() == 2);
  CHECK(a.seeds[0].metric == one.seeds[0].metric);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.seeds[i].seed == b.seeds[i].seed);
    CHECK(a.seeds[i].metric == b.seeds[i].metric);
    CHECK(a.seeds[i].loss_trace == b.seeds[i].loss_trace);
  }
  CHECK(a.mean == b.mean);
}

TEST_CASE("function fitting is seeded and returns sorted predictions") {
  FunctionFitSpec spec;
  spec.target = FitTarget::SinCos;
  spec.kind = LayerKind::LarctanKAN;
  spec.widths = {4};
  spec.samples = 100;
  spec.steps = 30;
  const FunctionFitRun a = run_function_fit(spec, 3);
  const FunctionFitRun b = run_function_fit(spec, 3);
  CHECK(a.test_rmse == b.test_rmse);
  CHECK(a.test_x.size() == 20);
  CHECK(std::is_sorted(a.test_x.begin(), a.test_x.end()));
  CHECK(a.params == 4 + 4 + 1 + (4 + 1 + 4));
  CHECK(parse_target("step") == FitTarget::Step);
  CHECK(parse_target(target_name(FitTarget::SinCos)) == FitTarget::SinCos);
  CHECK_FALSE(parse_target("cubic").has_value());
  spec.test_fraction = 1.0;
  CHECK_THROWS_AS(run_function_fit(spec, 1), ConfigError);
}
