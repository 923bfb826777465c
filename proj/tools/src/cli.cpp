#include "kanforge_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "kanforge/data.hpp"
#include "kanforge/error.hpp"
#include "kanforge/mixer_model.hpp"
#include "kanforge/training.hpp"
#include "kanforge_cli/run_config.hpp"

namespace fs = std::filesystem;

namespace kanforge::cli {

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  std::size_t workers = 0;
  std::vector<std::string> overrides;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

LayerKind kind_or_throw(const std::string& name, const std::string& what) {
  const auto kind = parse_kind(name);
  if (!kind) throw ConfigError("unknown " + what + " '" + name + "' (valid kinds: " + valid_kind_names() + ")");
  return *kind;
}

LayerKind kan_variant(const std::string& name, const std::string& what) {
  const LayerKind kind = kind_or_throw(name, what);
  if (kind == LayerKind::Linear) throw ConfigError(what + " must be a KAN kind for a K slot, got '" + name + "'");
  return kind;
}

fs::path prepare_out_dir(const std::string& dir, bool force) {
  const fs::path path(dir);
  if (fs::exists(path)) {
    if (!fs::is_directory(path)) throw ConfigError("output path " + dir + " exists and is not a directory");
    if (!fs::is_empty(path) && !force) {
      throw ConfigError("output directory " + dir + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(path);
  return path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::uint64_t> resolve_seeds(const RunConfig& cfg, const GlobalOptions& g) {
  if (g.seed) return {*g.seed};
  return cfg.get_seeds("run.seeds");
}

std::size_t resolve_workers(const GlobalOptions& g) { return g.workers > 0 ? g.workers : default_workers(); }

// Dataset and splits -------------------------------------------------------

WindowShape window_from(const RunConfig& cfg) {
  WindowShape w{cfg.get_size("data.length"), cfg.get_size("data.channels"), cfg.get_size("data.intervals"),
                cfg.get_size("data.interval_length")};
  w.validate();
  return w;
}

HarDataset load_dataset(const RunConfig& cfg) {
  const std::string source = cfg.get("data.source");
  if (source == "synth") {
    SynthHarConfig sc;
    sc.classes = cfg.get_size("data.classes");
    sc.subjects = cfg.get_size("data.subjects");
    sc.windows_per_subject = cfg.get_size("data.windows_per_subject");
    sc.shape = window_from(cfg);
    sc.noise_sigma = cfg.get_double("data.noise");
    sc.seed = static_cast<std::uint64_t>(cfg.get_size("data.seed"));
    return gen_synth_har(sc);
  }
  CsvOptions opts;
  opts.label_column = cfg.get("data.label_column");
  opts.subject_column = cfg.get("data.subject_column");
  opts.majority_label = cfg.get_bool("data.majority_label");
  opts.classes = cfg.get_size("data.classes");
  return load_windowed_csv(source, window_from(cfg), opts);
}

std::vector<DataSplit> make_splits(const RunConfig& cfg, const HarDataset& ds) {
  const std::string mode = cfg.get("data.split");
  const auto seed = static_cast<std::uint64_t>(cfg.get_size("data.split_seed"));
  if (mode == "holdout") return {holdout_split(ds, cfg.get_double("data.test_fraction"), seed)};
  if (mode == "loso") return loso_splits(ds, seed);
  throw ConfigError("data.split must be holdout or loso, got '" + mode + "'");
}

TrainConfig train_config_from(const RunConfig& cfg, const GlobalOptions& g) {
  TrainConfig tc;
  tc.lr = cfg.get_double("train.lr");
  tc.max_epochs = cfg.get_size("train.epochs");
  tc.patience = cfg.get_size("train.patience");
  tc.batch_size = cfg.get_size("train.batch");
  const std::string monitor = cfg.get("train.monitor");
  if (monitor == "macro_f1") {
    tc.monitor = Monitor::MacroF1;
  } else if (monitor == "loss") {
    tc.monitor = Monitor::Loss;
  } else {
    throw ConfigError("train.monitor must be macro_f1 or loss, got '" + monitor + "'");
  }
  tc.seeds = resolve_seeds(cfg, g);
  tc.validate();
  return tc;
}

void apply_grid(SlotSpec& slot, const RunConfig& cfg) {
  if (slot.kind != LayerKind::BSplineKAN) return;
  slot.grid.size = cfg.get_size("model.grid_size");
  slot.grid.degree = cfg.get_size("model.spline_degree");
}

// "hybrid" or a K/M code; K slots take the configured per-slot variants.
ModelSpec model_spec_from(const RunConfig& cfg, const std::string& placement, const WindowShape& window,
                          std::size_t classes) {
  ModelSpec spec;
  spec.window = window;
  spec.classes = classes;
  spec.hidden = cfg.get_size("model.hidden");
  spec.mixer_depth = cfg.get_size("model.depth");
  spec.expansion = cfg.get_size("model.expansion");
  spec.use_fft = cfg.get_bool("model.fft");
  if (placement == "hybrid") {
    const ModelSpec h = hybrid_spec(window, classes, spec.hidden);
    spec.embedding = h.embedding;
    spec.mixer = h.mixer;
    spec.classifier = h.classifier;
  } else {
    apply_placement(spec, placement, kan_variant(cfg.get("model.embedding"), "model.embedding"),
                    kan_variant(cfg.get("model.mixer"), "model.mixer"),
                    kan_variant(cfg.get("model.classifier"), "model.classifier"));
  }
  apply_grid(spec.embedding, cfg);
  apply_grid(spec.mixer, cfg);
  apply_grid(spec.classifier, cfg);
  spec.validate();
  return spec;
}

// Runs every seed on every split. With several splits (LOSO) a seed's metric
// is its mean over folds; best_epoch and epochs_run are rounded fold means.
RunReport run_on_splits(const ModelSpec& spec, const std::vector<DataSplit>& splits, const TrainConfig& tc,
                        std::size_t workers, std::vector<std::vector<Model>>* models = nullptr) {
  if (splits.size() == 1) {
    std::vector<Model> best;
    RunReport r = run_experiment(spec, splits.front(), tc, workers, models ? &best : nullptr);
    if (models) models->push_back(std::move(best));
    return r;
  }
  std::vector<RunReport> folds;
  for (const auto& split : splits) {
    std::vector<Model> best;
    folds.push_back(run_experiment(spec, split, tc, workers, models ? &best : nullptr));
    if (models) models->push_back(std::move(best));
  }
  RunReport out = folds.front();
  const auto n = static_cast<double>(folds.size());
  for (std::size_t i = 0; i < out.seeds.size(); ++i) {
    double metric = 0, best = 0, run = 0;
    for (const auto& f : folds) {
      metric += f.seeds[i].metric;
      best += static_cast<double>(f.seeds[i].best_epoch);
      run += static_cast<double>(f.seeds[i].epochs_run);
    }
    out.seeds[i].metric = metric / n;
    out.seeds[i].best_epoch = static_cast<std::size_t>(std::llround(best / n));
    out.seeds[i].epochs_run = static_cast<std::size_t>(std::llround(run / n));
  }
  out.aggregate();
  return out;
}

std::string split_note(const RunConfig& cfg, const std::vector<DataSplit>& splits) {
  std::ostringstream s;
  s << "split: " << cfg.get("data.split") << " (" << splits.size() << (splits.size() == 1 ? " fold" : " folds")
    << ", test subjects";
  for (int id : splits.front().test_subjects) s << ' ' << id;
  if (splits.size() > 1) s << " ...";
  s << ")\n";
  return s.str();
}

// Commands -----------------------------------------------------------------

int cmd_fit_function(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
  const std::string target_text = cfg.get("fit.target");
  const auto target = parse_target(target_text);
  if (!target) throw ConfigError("unknown target '" + target_text + "' (valid: step, sincos)");
  FunctionFitSpec spec;
  spec.target = *target;
  spec.kind = kind_or_throw(cfg.get("fit.model"), "model");
  spec.samples = cfg.get_size("fit.samples");
  spec.test_fraction = cfg.get_double("fit.test_fraction");
  spec.steps = cfg.get_size("fit.steps");
  spec.lr = cfg.get_double("fit.lr");
  spec.widths = default_fit_widths(spec.target, spec.kind);
  const std::size_t width = cfg.get_size("fit.width");
  const std::size_t depth = cfg.get_size("fit.depth");
  if (width > 0 || depth > 0) {
    spec.widths.assign(depth > 0 ? depth : spec.widths.size(), width > 0 ? width : spec.widths.front());
  }
  const auto seeds = resolve_seeds(cfg, g);
  const fs::path dir = prepare_out_dir(g.out_dir, g.force);
  write_text(dir / "config.txt", cfg.to_text());

  std::vector<FunctionFitRun> runs(seeds.size());
  parallel_for(seeds.size(), resolve_workers(g), [&](std::size_t i) { runs[i] = run_function_fit(spec, seeds[i]); });

  double mean_test = 0, mean_train = 0;
  for (const auto& r : runs) {
    mean_test += r.test_rmse;
    mean_train += r.train_rmse;
  }
  mean_test /= static_cast<double>(runs.size());
  mean_train /= static_cast<double>(runs.size());
  double var_test = 0, var_train = 0;
  for (const auto& r : runs) {
    var_test += (r.test_rmse - mean_test) * (r.test_rmse - mean_test);
    var_train += (r.train_rmse - mean_train) * (r.train_rmse - mean_train);
  }
  const double std_test = std::sqrt(var_test / static_cast<double>(runs.size()));
  const double std_train = std::sqrt(var_train / static_cast<double>(runs.size()));

  std::ostringstream table;
  table << "seed,params,train_rmse,test_rmse\n";
  for (const auto& r : runs) {
    table << r.seed << ',' << r.params << ',' << fmt("%.8f", r.train_rmse) << ',' << fmt("%.8f", r.test_rmse) << '\n';
  }
  table << "mean,," << fmt("%.8f", mean_train) << ',' << fmt("%.8f", mean_test) << '\n';
  table << "std,," << fmt("%.8f", std_train) << ',' << fmt("%.8f", std_test) << '\n';
  write_text(dir / "rmse.csv", table.str());

  std::ostringstream pred;
  pred << "x,y_hat\n";
  const auto& first = runs.front();
  for (std::size_t i = 0; i < first.test_x.size(); ++i) {
    pred << fmt("%.10f", first.test_x[i]) << ',' << fmt("%.10f", first.test_pred[i]) << '\n';
  }
  write_text(dir / "predictions.csv", pred.str());

  std::ostringstream summary;
  summary << "target: " << target_name(spec.target) << '\n';
  summary << "model: " << kind_name(spec.kind) << " [1";
  for (std::size_t w : spec.widths) summary << ", " << w;
  summary << ", 1]\n";
  summary << "parameters: " << first.params << '\n';
  summary << "steps: " << spec.steps << " (full-batch Adam, lr " << spec.lr << ")\n";
  summary << "seeds: " << runs.size() << '\n';
  summary << "test_rmse: " << fmt("%.6f", mean_test) << " +- " << fmt("%.6f", std_test) << '\n';
  summary << "train_rmse: " << fmt("%.6f", mean_train) << " +- " << fmt("%.6f", std_train) << '\n';
  summary << "predictions.csv: seed " << first.seed << ", sorted test inputs\n";
  write_text(dir / "summary.txt", summary.str());

  out << target_name(spec.target) << ' ' << kind_name(spec.kind) << " params=" << first.params
      << " test_rmse=" << fmt("%.6f", mean_test) << " (mean of " << runs.size() << " seeds, std "
      << fmt("%.6f", std_test) << ")\n";
  return kExitOk;
}

struct AblationRow {
  std::string label;
  ModelSpec spec;
  RunReport report;
};

std::string fmt_gain(double mean, double base) {
  if (base == 0.0) return "nan";
  return fmt("%.2f", 100.0 * (mean - base) / base);
}

int cmd_ablate(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
  const HarDataset ds = load_dataset(cfg);
  const auto splits = make_splits(cfg, ds);
  const TrainConfig tc = train_config_from(cfg, g);
  const auto variants = cfg.get_list("ablate.variants");
  for (const auto& v : variants) kan_variant(v, "variant");

  std::vector<AblationRow> rows;
  bool have_baseline = false;
  auto add_row = [&](const std::string& label, ModelSpec spec) {
    for (const auto& r : rows) {
      if (r.label == label) return;
    }
    rows.push_back({label, std::move(spec), {}});
  };
  for (const auto& code : cfg.get_list("ablate.placements")) {
    if (code == "hybrid") {
      add_row("hybrid", model_spec_from(cfg, "hybrid", ds.shape, ds.classes));
      continue;
    }
    ModelSpec probe = model_spec_from(cfg, code, ds.shape, ds.classes);
    if (probe.placement() == "M-M-M") {
      add_row("M-M-M", probe);
      have_baseline = true;
      continue;
    }
    for (const auto& v : variants) {
      RunConfig local = cfg;
      local.set("model.embedding", v);
      local.set("model.mixer", v);
      local.set("model.classifier", v);
      ModelSpec spec = model_spec_from(local, code, ds.shape, ds.classes);
      add_row(spec.placement() + " " + v, spec);
    }
  }
  if (!have_baseline) add_row("M-M-M", model_spec_from(cfg, "M-M-M", ds.shape, ds.classes));

  const fs::path dir = prepare_out_dir(g.out_dir, g.force);
  write_text(dir / "config.txt", cfg.to_text());
  const std::size_t workers = resolve_workers(g);
  for (auto& row : rows) row.report = run_on_splits(row.spec, splits, tc, workers);

  double base = 0;
  for (const auto& row : rows) {
    if (row.label == "M-M-M") base = row.report.mean;
  }
  std::ostringstream table;
  table << "configuration,embedding,mixer,classifier,params,flops,mean_macro_f1,std_macro_f1,gain_pct\n";
  for (const auto& row : rows) {
    table << row.label << ',' << kind_name(row.spec.embedding.kind) << ',' << kind_name(row.spec.mixer.kind) << ','
          << kind_name(row.spec.classifier.kind) << ',' << row.report.total_params << ',' << row.report.flops << ','
          << fmt("%.6f", row.report.mean) << ',' << fmt("%.6f", row.report.stddev) << ','
          << fmt_gain(row.report.mean, base) << '\n';
  }
  write_text(dir / "ablation.csv", table.str());

  std::ostringstream summary;
  summary << "dataset: " << cfg.get("data.source") << " (" << ds.size() << " windows, " << ds.classes
          << " classes)\n";
  summary << split_note(cfg, splits);
  summary << "seeds: " << tc.seeds.size() << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %10s %12s %10s %9s\n", "configuration", "params", "macro_f1", "std",
                "gain_%");
  summary << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-24s %10zu %12.4f %10.4f %9s\n", row.label.c_str(), row.report.total_params,
                  row.report.mean, row.report.stddev, fmt_gain(row.report.mean, base).c_str());
    summary << line;
  }
  write_text(dir / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

int cmd_scaling(const RunConfig& cfg, const GlobalOptions& g, bool skip_train, std::ostream& out) {
  const HarDataset ds = load_dataset(cfg);
  const auto splits = make_splits(cfg, ds);
  const TrainConfig tc = train_config_from(cfg, g);
  struct Row {
    std::string family;
    std::string setting;
    ModelSpec spec;
  };
  std::vector<Row> rows;
  for (const auto& item : cfg.get_list("scaling.grid_sizes")) {
    RunConfig local = cfg;
    local.set("model.grid_size", item);
    rows.push_back({"hybrid", "G=" + item, model_spec_from(local, "hybrid", ds.shape, ds.classes)});
  }
  for (const auto& item : cfg.get_list("scaling.hidden")) {
    RunConfig local = cfg;
    local.set("model.hidden", item);
    rows.push_back({"M-M-M", "hidden=" + item, model_spec_from(local, "M-M-M", ds.shape, ds.classes)});
  }

  const fs::path dir = prepare_out_dir(g.out_dir, g.force);
  write_text(dir / "config.txt", cfg.to_text());
  const std::size_t workers = resolve_workers(g);
  std::ostringstream table;
  table << "family,setting,params,flops,mean_macro_f1,std_macro_f1\n";
  std::ostringstream summary;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-10s %10s %12s %10s\n", "family", "setting", "params", "flops", "macro_f1");
  summary << line;
  for (const auto& row : rows) {
    const Model model(row.spec, tc.seeds.front());
    const std::size_t params = model.total_params();
    const std::size_t flops = model.flops_estimate(1);
    std::string mean, stddev, shown = "-";
    if (!skip_train) {
      const RunReport r = run_on_splits(row.spec, splits, tc, workers);
      mean = fmt("%.6f", r.mean);
      stddev = fmt("%.6f", r.stddev);
      shown = fmt("%.4f", r.mean);
    }
    table << row.family << ',' << row.setting << ',' << params << ',' << flops << ',' << mean << ',' << stddev << '\n';
    std::snprintf(line, sizeof line, "%-8s %-10s %10zu %12zu %10s\n", row.family.c_str(), row.setting.c_str(), params,
                  flops, shown.c_str());
    summary << line;
  }
  write_text(dir / "scaling.csv", table.str());
  write_text(dir / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
  const HarDataset ds = load_dataset(cfg);
  const auto splits = make_splits(cfg, ds);
  const TrainConfig tc = train_config_from(cfg, g);
  const ModelSpec spec = model_spec_from(cfg, cfg.get("model.placement"), ds.shape, ds.classes);

  const fs::path dir = prepare_out_dir(g.out_dir, g.force);
  write_text(dir / "config.txt", cfg.to_text());
  std::vector<std::vector<Model>> models;
  const RunReport report = run_on_splits(spec, splits, tc, resolve_workers(g), &models);

  fs::create_directories(dir / "checkpoints");
  for (std::size_t f = 0; f < models.size(); ++f) {
    for (std::size_t s = 0; s < models[f].size(); ++s) {
      std::string name = "seed_" + std::to_string(tc.seeds[s]);
      if (splits.size() > 1) name += "_fold_" + std::to_string(splits[f].test_subjects.front());
      std::ofstream ckpt(dir / "checkpoints" / (name + ".ckpt"), std::ios::binary);
      if (!ckpt) throw Error("cannot write checkpoint " + name);
      save_checkpoint(ckpt, models[f][s]);
    }
  }
  std::ostringstream table;
  write_report_csv(table, report);
  write_text(dir / "report.csv", table.str());
  std::ostringstream summary;
  summary << "dataset: " << cfg.get("data.source") << " (" << ds.size() << " windows, " << ds.classes
          << " classes)\n";
  summary << split_note(cfg, splits);
  write_report_summary(summary, report);
  write_text(dir / "summary.txt", summary.str());
  out << summary.str();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"KAN-MLP-Mixer experiments for windowed sensor data", "kanforge"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "key=value configuration file");
  app.add_option("--seed", g.seed, "run a single seed instead of run.seeds");
  app.add_option("--out", g.out_dir, "output directory (default kanforge_runs/<command>)");
  app.add_flag("--force", g.force, "write into a non-empty output directory");
  app.add_option("--workers", g.workers, "parallel workers (default KANFORGE_WORKERS or all cores)");
  app.add_option("--set", g.overrides, "override a configuration key, key=value (repeatable)");

  // per-command flags are folded into the configuration after the file
  std::vector<std::pair<std::string, std::string>> flag_values;
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&flag_values, key](const std::string& v) { flag_values.emplace_back(key, v); }, help);
  };

  auto no_fft = [&](CLI::App* sub) {
    sub->add_flag_callback(
        "--no-fft", [&flag_values] { flag_values.emplace_back("model.fft", "false"); },
        "drop the spectrum features (model.fft=false)");
  };

  auto* fit = app.add_subcommand("fit-function", "fit a 1-D target with a small regressor");
  flag(fit, "--target", "fit.target", "step or sincos");
  flag(fit, "--model", "fit.model", "layer kind");
  flag(fit, "--width", "fit.width", "hidden width (0 = preset)");
  flag(fit, "--depth", "fit.depth", "hidden layers (0 = preset)");
  flag(fit, "--steps", "fit.steps", "full-batch Adam steps");
  flag(fit, "--lr", "fit.lr", "learning rate");

  auto* ablate = app.add_subcommand("ablate", "placement ablation table");
  flag(ablate, "--data", "data.source", "synth or a windowed CSV path");
  flag(ablate, "--placements", "ablate.placements", "comma-separated codes, e.g. K-M-M,hybrid,M-M-M");
  flag(ablate, "--variants", "ablate.variants", "comma-separated KAN kinds for K slots");
  no_fft(ablate);

  bool skip_train = false;
  auto* scaling = app.add_subcommand("scaling", "parameter and FLOP scaling sweep");
  flag(scaling, "--data", "data.source", "synth or a windowed CSV path");
  scaling->add_flag("--skip-train", skip_train, "report params and FLOPs only");
  no_fft(scaling);

  auto* train = app.add_subcommand("train", "train one configuration over the seeds");
  flag(train, "--data", "data.source", "synth or a windowed CSV path");
  flag(train, "--placement", "model.placement", "K/M code or hybrid");
  no_fft(train);

  std::vector<std::string> argv_store{"kanforge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg.load_file(g.config_path);
    for (const auto& [key, value] : flag_values) cfg.set(key, value);
    for (const auto& o : g.overrides) cfg.apply_override(o);
    CLI::App* sub = app.get_subcommands().front();
    if (g.out_dir.empty()) g.out_dir = "kanforge_runs/" + sub->get_name();
    if (sub == fit) return cmd_fit_function(cfg, g, out);
    if (sub == ablate) return cmd_ablate(cfg, g, out);
    if (sub == scaling) return cmd_scaling(cfg, g, skip_train, out);
    return cmd_train(cfg, g, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace kanforge::cli
