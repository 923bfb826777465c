#include "kanforge_cli/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kanforge/error.hpp"

namespace kanforge::cli {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig::RunConfig() {
  entries_ = {
      {"run.seeds", "1,2,3,4,5"},
      {"fit.target", "sincos"},
      {"fit.model", "kan"},
      {"fit.width", "0"},
      {"fit.depth", "0"},
      {"fit.samples", "1024"},
      {"fit.test_fraction", "0.2"},
      {"fit.steps", "2000"},
      {"fit.lr", "0.01"},
      {"data.source", "synth"},
      {"data.classes", "4"},
      {"data.subjects", "8"},
      {"data.windows_per_subject", "160"},
      {"data.noise", "0.5"},
      {"data.seed", "1"},
      {"data.length", "64"},
      {"data.channels", "3"},
      {"data.intervals", "4"},
      {"data.interval_length", "16"},
      {"data.label_column", "label"},
      {"data.subject_column", "subject"},
      {"data.majority_label", "false"},
      {"data.split", "holdout"},
      {"data.test_fraction", "0.25"},
      {"data.split_seed", "1"},
      {"model.placement", "K-M-K"},
      {"model.embedding", "efficientkan"},
      {"model.mixer", "efficientkan"},
      {"model.classifier", "larctankan"},
      {"model.hidden", "16"},
      {"model.depth", "2"},
      {"model.expansion", "2"},
      {"model.fft", "true"},
      {"model.grid_size", "5"},
      {"model.spline_degree", "3"},
      {"train.lr", "0.001"},
      {"train.epochs", "200"},
      {"train.patience", "7"},
      {"train.batch", "256"},
      {"train.monitor", "macro_f1"},
      {"ablate.placements", "K-M-M,M-K-M,M-M-K,hybrid,M-M-M"},
      {"ablate.variants", "efficientkan"},
      {"scaling.grid_sizes", "1,2,3,4,5,6"},
      {"scaling.hidden", "8,16,24,32,40"},
  };
}

bool RunConfig::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = value;
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

const std::string& RunConfig::get(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  errno = 0;
  char* end = nullptr;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw ConfigError(key + ": expected a non-negative integer, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list item");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::uint64_t> RunConfig::get_seeds(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : get_list(key)) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
    if (*end != '\0' || errno != 0 || item.front() == '-') {
      throw ConfigError(key + ": expected non-negative integers, got '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace kanforge::cli
