#pragma once

// Flat key=value run configuration with section prefixes (model.hidden=16).
// Every key has a default; files and --set overrides may only touch known
// keys.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace kanforge::cli {

class RunConfig {
 public:
  RunConfig();

  /// Throws ConfigError for an unknown key.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;

  /// Parses "key=value" lines; '#' starts a comment, blank lines are ignored.
  /// Errors name the file and line.
  void load_file(const std::filesystem::path& path);
  /// "key=value" as given on the command line.
  void apply_override(const std::string& assignment);

  std::string get_string(const std::string& key) const { return get(key); }
  long long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated list; empty items are rejected.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<std::uint64_t> get_seeds(const std::string& key) const;

  /// Every key in registration order, one "key=value" per line.
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace kanforge::cli
