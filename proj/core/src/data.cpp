#include "kanforge/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "kanforge/error.hpp"
#include "kanforge/random.hpp"

namespace kanforge {

double step_target(double x, double amplitude, double offset) {
  return (x < 0.0 ? -amplitude : amplitude) + offset;
}

double sincos_target(double x) {
  return std::sin(2.0 * std::numbers::pi * x) * std::cos(2.0 * std::numbers::pi * x);
}

namespace {

template <typename Fn>
FunctionDataset sample_function(std::size_t n, std::uint64_t seed, double lo, double hi, std::string name,
                                Fn&& f) {
  if (n < 2) throw ConfigError("function datasets need at least 2 samples");
  Rng rng(seed);
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng.uniform(lo, hi);
    ys[i] = f(xs[i]);
  }
  return {Tensor({n, 1}, std::move(xs)), Tensor({n, 1}, std::move(ys)), std::move(name), seed};
}

}  // namespace

FunctionDataset gen_step(std::size_t n, std::uint64_t seed, double amplitude, double offset) {
  return sample_function(n, seed, -1.0, 1.0, "step",
                         [=](double x) { return step_target(x, amplitude, offset); });
}

FunctionDataset gen_sincos(std::size_t n, std::uint64_t seed) {
  return sample_function(n, seed, 0.0, 1.0, "sincos", sincos_target);
}

std::pair<FunctionDataset, FunctionDataset> split_function_dataset(const FunctionDataset& ds,
                                                                   double test_fraction, std::uint64_t seed) {
  const std::size_t n = ds.x.dim(0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  auto take = [&](std::size_t from, std::size_t to) {
    std::vector<double> xs, ys;
    for (std::size_t i = from; i < to; ++i) {
      xs.push_back(ds.x.data()[order[i]]);
      ys.push_back(ds.y.data()[order[i]]);
    }
    const std::size_t m = to - from;
    return FunctionDataset{Tensor({m, 1}, std::move(xs)), Tensor({m, 1}, std::move(ys)), ds.generator, ds.seed};
  };
  return {take(n_test, n), take(0, n_test)};
}

std::vector<int> HarDataset::subject_ids() const {
  std::set<int> ids(subjects.begin(), subjects.end());
  return {ids.begin(), ids.end()};
}

HarDataset subset(const HarDataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t per = ds.shape.length * ds.shape.channels;
  std::vector<double> values;
  values.reserve(indices.size() * per);
  HarDataset out;
  out.shape = ds.shape;
  out.classes = ds.classes;
  const auto src = ds.windows.data();
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw DataError("window index " + std::to_string(i) + " out of range");
    values.insert(values.end(), src.begin() + i * per, src.begin() + (i + 1) * per);
    out.labels.push_back(ds.labels[i]);
    out.subjects.push_back(ds.subjects[i]);
  }
  if (indices.empty()) {
    out.windows = Tensor::zeros({1, ds.shape.length, ds.shape.channels});
    return out;  // empty datasets carry a placeholder tensor; size() is 0
  }
  out.windows = Tensor({indices.size(), ds.shape.length, ds.shape.channels}, std::move(values));
  return out;
}

ChannelStats channel_stats(const HarDataset& ds) {
  const std::size_t ch = ds.shape.channels;
  const std::size_t samples = ds.size() * ds.shape.length;
  ChannelStats stats{std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0)};
  if (samples == 0) {
    stats.stddev.assign(ch, 1.0);
    return stats;
  }
  const auto d = ds.windows.data();
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t c = 0; c < ch; ++c) stats.mean[c] += d[s * ch + c];
  }
  for (double& m : stats.mean) m /= static_cast<double>(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double diff = d[s * ch + c] - stats.mean[c];
      stats.stddev[c] += diff * diff;
    }
  }
  for (double& v : stats.stddev) v = std::sqrt(v / static_cast<double>(samples));
  return stats;
}

namespace {

template <typename Fn>
HarDataset map_channels(const HarDataset& ds, Fn&& fn) {
  HarDataset out = ds;
  out.windows = ds.windows.detach();
  auto d = out.windows.mutable_data();
  const std::size_t ch = ds.shape.channels;
  for (std::size_t i = 0; i < ds.size() * ds.shape.length * ch; ++i) d[i] = fn(d[i], i % ch);
  return out;
}

}  // namespace

HarDataset normalize(const HarDataset& ds, const ChannelStats& stats) {
  return map_channels(ds, [&](double v, std::size_t c) {
    const double s = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
    return (v - stats.mean[c]) / s;
  });
}

HarDataset denormalize(const HarDataset& ds, const ChannelStats& stats) {
  return map_channels(ds, [&](double v, std::size_t c) {
    const double s = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
    return v * s + stats.mean[c];
  });
}

HarDataset gen_synth_har(const SynthHarConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synthetic HAR needs at least 2 classes");
  if (cfg.subjects == 0 || cfg.windows_per_subject == 0) {
    throw ConfigError("synthetic HAR needs subjects and windows");
  }
  cfg.shape.validate();
  const std::size_t L = cfg.shape.length, C = cfg.shape.channels;
  const std::size_t n = cfg.subjects * cfg.windows_per_subject;
  const double two_pi = 2.0 * std::numbers::pi;
  const double k1 = static_cast<double>(cfg.classes + 1);
  Rng rng(cfg.seed);
  std::vector<double> amplitude(cfg.subjects);
  for (double& a : amplitude) a = rng.uniform(0.7, 1.3);

  HarDataset ds;
  ds.shape = cfg.shape;
  ds.classes = cfg.classes;
  std::vector<double> values(n * L * C);
  std::size_t w = 0;
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    for (std::size_t j = 0; j < cfg.windows_per_subject; ++j, ++w) {
      const std::size_t c = j % cfg.classes;
      const double freq = static_cast<double>(c + 1) / (2.0 * k1);
      const double phi0 = rng.uniform(0.0, two_pi);
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t ch = 0; ch < C; ++ch) {
          const double phase = two_pi * static_cast<double>((c + 1) * (ch + 1)) / k1;
          const double clean = amplitude[s] * std::sin(two_pi * freq * static_cast<double>(t) + phi0 + phase);
          values[(w * L + t) * C + ch] = clean + cfg.noise_sigma * rng.normal();
        }
      }
      ds.labels.push_back(static_cast<int>(c));
      ds.subjects.push_back(static_cast<int>(s));
    }
  }
  ds.windows = Tensor({n, L, C}, std::move(values));
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& text, double& out) {
  std::size_t start = text.find_first_not_of(" \t");
  std::size_t end = text.find_last_not_of(" \t");
  if (start == std::string::npos) return false;
  const char* first = text.data() + start;
  const char* last = text.data() + end + 1;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

HarDataset load_windowed_csv(const std::filesystem::path& path, const WindowShape& shape,
                             const CsvOptions& options) {
  shape.validate();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file '" + path.string() + "'");
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": missing header row");
  const auto header = split_csv_line(line);
  int label_col = -1, subject_col = -1;
  std::vector<std::size_t> channel_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == options.label_column) label_col = static_cast<int>(i);
    else if (header[i] == options.subject_column) subject_col = static_cast<int>(i);
    else channel_cols.push_back(i);
  }
  if (label_col < 0 || subject_col < 0) {
    throw DataError(where + ": header must contain '" + options.subject_column + "' and '" +
                    options.label_column + "' columns");
  }
  if (channel_cols.size() != shape.channels) {
    throw DataError(where + ": header has " + std::to_string(channel_cols.size()) + " channel columns, expected " +
                    std::to_string(shape.channels));
  }

  struct Row {
    int subject;
    int label;
    std::vector<double> values;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, got " + std::to_string(cells.size()));
    }
    Row row{0, 0, {}, line_no};
    double v = 0.0;
    if (!parse_number(cells[subject_col], v) || v != std::floor(v)) {
      throw DataError(where + ":" + std::to_string(line_no) + ": subject '" + cells[subject_col] +
                      "' is not an integer");
    }
    row.subject = static_cast<int>(v);
    if (!parse_number(cells[label_col], v) || v != std::floor(v) || v < 0 ||
        (options.classes > 0 && v >= static_cast<double>(options.classes))) {
      throw DataError(where + ":" + std::to_string(line_no) + ": unknown label '" + cells[label_col] + "'");
    }
    row.label = static_cast<int>(v);
    for (std::size_t c : channel_cols) {
      if (!parse_number(cells[c], v)) {
        throw DataError(where + ":" + std::to_string(line_no) + ": non-numeric value '" + cells[c] +
                        "' in column '" + header[c] + "'");
      }
      row.values.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  HarDataset ds;
  ds.shape = shape;
  std::vector<double> values;
  int max_label = -1;
  std::size_t window_index = 0;
  for (std::size_t i = 0; i < rows.size();) {
    // consecutive run of one subject
    std::size_t end = i;
    while (end < rows.size() && rows[end].subject == rows[i].subject) ++end;
    const std::size_t count = end - i;
    if (count % shape.length != 0) {
      throw DataError(where + ":" + std::to_string(rows[i].line) + ": subject " + std::to_string(rows[i].subject) +
                      " block has " + std::to_string(count) + " rows, not a multiple of window length " +
                      std::to_string(shape.length));
    }
    for (std::size_t w = i; w < end; w += shape.length, ++window_index) {
      std::map<int, std::size_t> votes;
      for (std::size_t r = w; r < w + shape.length; ++r) {
        ++votes[rows[r].label];
        values.insert(values.end(), rows[r].values.begin(), rows[r].values.end());
      }
      if (votes.size() > 1 && !options.majority_label) {
        throw DataError(where + ": window " + std::to_string(window_index) + " (starting line " +
                        std::to_string(rows[w].line) + ") mixes labels");
      }
      int label = votes.begin()->first;
      std::size_t best = 0;
      for (const auto& [l, n] : votes) {
        if (n > best) {
          best = n;
          label = l;
        }
      }
      ds.labels.push_back(label);
      ds.subjects.push_back(rows[i].subject);
      max_label = std::max(max_label, label);
    }
    i = end;
  }
  if (ds.labels.empty()) throw DataError(where + ": no data rows");
  ds.classes = options.classes > 0 ? options.classes : static_cast<std::size_t>(max_label + 1);
  ds.windows = Tensor({ds.labels.size(), shape.length, shape.channels}, std::move(values));
  return ds;
}

void write_windowed_csv(const HarDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  out << "subject,label";
  for (std::size_t c = 0; c < ds.shape.channels; ++c) out << ",ch" << c;
  out << '\n';
  const auto d = ds.windows.data();
  char buf[32];
  for (std::size_t w = 0; w < ds.size(); ++w) {
    for (std::size_t t = 0; t < ds.shape.length; ++t) {
      out << ds.subjects[w] << ',' << ds.labels[w];
      for (std::size_t c = 0; c < ds.shape.channels; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", d[(w * ds.shape.length + t) * ds.shape.channels + c]);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

DataSplit split_by_subjects(const HarDataset& ds, const std::vector<int>& test_subjects, std::uint64_t seed) {
  const std::set<int> test(test_subjects.begin(), test_subjects.end());
  std::vector<int> rest;
  for (int s : ds.subject_ids()) {
    if (!test.count(s)) rest.push_back(s);
  }
  if (rest.size() < 2) throw DataError("need at least two non-test subjects for train and validation");
  Rng rng(seed);
  rng.shuffle(std::span<int>(rest));
  std::size_t n_val = static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(rest.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
  const std::set<int> val(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));

  DataSplit split;
  split.test_subjects.assign(test.begin(), test.end());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (test.count(ds.subjects[i])) split.test_indices.push_back(i);
    else if (val.count(ds.subjects[i])) split.val_indices.push_back(i);
    else split.train_indices.push_back(i);
  }
  const HarDataset train_raw = subset(ds, split.train_indices);
  split.stats = channel_stats(train_raw);
  split.train = normalize(train_raw, split.stats);
  split.val = normalize(subset(ds, split.val_indices), split.stats);
  split.test = normalize(subset(ds, split.test_indices), split.stats);
  return split;
}

std::vector<DataSplit> loso_splits(const HarDataset& ds, std::uint64_t seed) {
  const auto ids = ds.subject_ids();
  if (ids.size() < 3) {
    throw DataError("leave-one-subject-out needs at least 3 subjects, got " + std::to_string(ids.size()));
  }
  std::vector<DataSplit> splits;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    splits.push_back(split_by_subjects(ds, {ids[i]}, derive_seed(seed, i)));
  }
  return splits;
}

DataSplit holdout_split(const HarDataset& ds, double test_fraction, std::uint64_t seed) {
  auto ids = ds.subject_ids();
  if (ids.size() < 3) throw DataError("holdout split needs at least 3 subjects, got " + std::to_string(ids.size()));
  Rng rng(seed);
  rng.shuffle(std::span<int>(ids));
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 2);
  std::vector<int> test(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  return split_by_subjects(ds, test, derive_seed(seed, 0x5eed));
}

}  // namespace kanforge
