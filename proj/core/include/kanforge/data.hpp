#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kanforge/mixer_model.hpp"
#include "kanforge/tensor.hpp"

namespace kanforge {

/// Samples of a scalar function, x and y both [N x 1].
struct FunctionDataset {
  Tensor x;
  Tensor y;
  std::string generator;
  std::uint64_t seed = 0;
};

/// y = -amplitude + offset for x < 0, +amplitude + offset for x >= 0, with x
/// uniform on [-1, 1].
FunctionDataset gen_step(std::size_t n, std::uint64_t seed, double amplitude = 1.0, double offset = 0.0);
/// y = sin(2 pi x) cos(2 pi x) with x uniform on [0, 1].
FunctionDataset gen_sincos(std::size_t n, std::uint64_t seed);
double step_target(double x, double amplitude = 1.0, double offset = 0.0);
double sincos_target(double x);

/// Seeded train/test split of a function dataset (test_fraction of rows).
std::pair<FunctionDataset, FunctionDataset> split_function_dataset(const FunctionDataset& ds,
                                                                   double test_fraction, std::uint64_t seed);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct HarDataset {
  Tensor windows;  // [N x L x C]
  std::vector<int> labels;
  std::vector<int> subjects;
  WindowShape shape;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Sorted distinct subject ids.
  std::vector<int> subject_ids() const;
};

/// Windows at `indices`, in that order.
HarDataset subset(const HarDataset& ds, const std::vector<std::size_t>& indices);

/// Per-channel mean and population standard deviation over every sample.
ChannelStats channel_stats(const HarDataset& ds);
/// (x - mean) / std per channel; channels with zero spread are only centred.
HarDataset normalize(const HarDataset& ds, const ChannelStats& stats);
/// x * std + mean per channel.
HarDataset denormalize(const HarDataset& ds, const ChannelStats& stats);

struct SynthHarConfig {
  std::size_t classes = 4;
  std::size_t subjects = 8;
  std::size_t windows_per_subject = 160;
  WindowShape shape{64, 3, 4, 16};
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
};

/// Synthetic multi-channel activity windows.
///
/// Class c oscillates at f_c = (c + 1) / (2 (classes + 1)) cycles per sample.
/// Channel ch of a window of class c from subject s is
///
///   x[n] = a_s * sin(2 pi f_c n + phi0 + 2 pi (c + 1)(ch + 1) / (classes + 1))
///        + noise_sigma * N(0, 1)
///
/// with a_s ~ U[0.7, 1.3] drawn once per subject and phi0 ~ U[0, 2 pi) per
/// window. Labels cycle through the classes within each subject.
HarDataset gen_synth_har(const SynthHarConfig& cfg);

struct CsvOptions {
  std::string label_column = "label";
  std::string subject_column = "subject";
  /// Take the most frequent label of a mixed window (ties -> smallest label)
  /// instead of rejecting it.
  bool majority_label = false;
  /// Labels must be < classes; 0 infers classes = max label + 1.
  std::size_t classes = 0;
};

/// Reads the windowed CSV format:
///
///   subject,label,ch0,...,ch{C-1}      header (column order may vary)
///   one sample per row; windows are consecutive L-row blocks per subject in
///   file order.
///
/// Throws DataError naming the line for malformed rows, non-numeric values and
/// unknown labels, and naming the window for mixed labels in strict mode.
/// Throws ConfigError if the file does not exist.
HarDataset load_windowed_csv(const std::filesystem::path& path, const WindowShape& shape,
                             const CsvOptions& options = {});
/// Writes `ds` in the same format with round-trip exact (%.17g) values.
void write_windowed_csv(const HarDataset& ds, const std::filesystem::path& path);

/// A train/validation/test partition by subject, normalised with statistics
/// of the training part.
struct DataSplit {
  HarDataset train;
  HarDataset val;
  HarDataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
  ChannelStats stats;
  std::vector<int> test_subjects;
};

/// Fraction of the non-test subjects held out for validation.
inline constexpr double kValidationFraction = 0.2;

/// One split per subject: that subject is the test set, a seeded 20% of the
/// remaining subjects (at least one) validate, the rest train.
/// Throws DataError with fewer than 3 subjects.
std::vector<DataSplit> loso_splits(const HarDataset& ds, std::uint64_t seed);

/// A single split holding out round(test_fraction * subjects) subjects (at
/// least one) for test, chosen with `seed`; validation as in loso_splits.
DataSplit holdout_split(const HarDataset& ds, double test_fraction, std::uint64_t seed);

/// Builds a split from explicit test subjects.
DataSplit split_by_subjects(const HarDataset& ds, const std::vector<int>& test_subjects, std::uint64_t seed);

}  // namespace kanforge
