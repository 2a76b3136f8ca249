#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probforest/matrix.hpp"

namespace probforest {

/// Predictor matrix plus outcome labels. Labels are class indices
/// 0..K-1 (binary outcomes use 0/1). `true_p` is present only for data
/// drawn from a known generating mechanism.
struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::optional<std::vector<double>> true_p;
  std::vector<std::string> feature_names;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t n_features() const noexcept { return x.cols(); }

  /// Number of classes implied by the labels (max label + 1).
  int n_classes() const;

  /// Throws std::invalid_argument if shapes disagree or true_p leaves (0,1).
  void validate() const;

  /// Rows `indices` of this dataset, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Default column names x1..xp.
std::vector<std::string> default_feature_names(std::size_t p);

/// Writes `x1,...,xp,y[,true_p]` (or the dataset's own feature names).
/// Floats use the shortest representation that round-trips exactly.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

/// Reads a dataset CSV. The outcome column must be named `y`; an optional
/// `true_p` column is recognised; every other column is a numeric feature.
/// With `require_outcome == false` a missing `y` column is allowed and the
/// result has empty labels.
Dataset read_dataset_csv(const std::filesystem::path& path, bool require_outcome = true);

/// Shortest round-trip decimal form of `v`.
std::string format_double(double v);

/// `v` rounded to `digits` significant digits.
std::string format_significant(double v, int digits);

/// Splits a CSV line on commas. Quoting is not supported; none of the
/// formats here produce it.
std::vector<std::string> split_csv_line(const std::string& line);

double parse_double(const std::string& field, const std::string& context);

}  // namespace probforest
