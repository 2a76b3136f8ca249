#include "probforest/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace probforest {

int Dataset::n_classes() const {
  if (y.empty()) return 0;
  return *std::max_element(y.begin(), y.end()) + 1;
}

void Dataset::validate() const {
  if (x.rows() != y.size()) {
    throw std::invalid_argument("Dataset: predictor rows (" + std::to_string(x.rows()) +
                                ") differ from outcome length (" + std::to_string(y.size()) + ")");
  }
  if (!feature_names.empty() && feature_names.size() != x.cols()) {
    throw std::invalid_argument("Dataset: feature name count differs from column count");
  }
  for (int label : y) {
    if (label < 0) throw std::invalid_argument("Dataset: negative class label");
  }
  if (true_p) {
    if (true_p->size() != y.size()) {
      throw std::invalid_argument("Dataset: true_p length differs from outcome length");
    }
    for (double p : *true_p) {
      if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("Dataset: true_p outside (0,1)");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.x = Matrix(indices.size(), x.cols());
  out.y.reserve(indices.size());
  if (true_p) out.true_p.emplace();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    std::copy_n(x.row(src).begin(), x.cols(), out.x.row(i).begin());
    out.y.push_back(y[src]);
    if (true_p) out.true_p->push_back((*true_p)[src]);
  }
  out.feature_names = feature_names;
  return out;
}

std::vector<std::string> default_feature_names(std::size_t p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return {buf, end};
}

std::string format_significant(double v, int digits) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  if (ec != std::errc{}) throw std::runtime_error("format_significant failed");
  return {buf, end};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

double parse_double(const std::string& field, const std::string& context) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    if (field == "NA" || field == "nan" || field == "NaN") return std::nan("");
    throw std::invalid_argument(context + ": cannot parse '" + field + "' as a number");
  }
  return v;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto names =
      data.feature_names.empty() ? default_feature_names(data.n_features()) : data.feature_names;
  for (const auto& n : names) out << n << ',';
  out << 'y';
  if (data.true_p) out << ",true_p";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.x.row(i)) out << format_double(v) << ',';
    out << data.y[i];
    if (data.true_p) out << ',' << format_double((*data.true_p)[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path, bool require_outcome) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = split_csv_line(line);

  std::optional<std::size_t> y_col, p_col;
  std::vector<std::size_t> feature_cols;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") {
      y_col = c;
    } else if (header[c] == "true_p") {
      p_col = c;
    } else {
      feature_cols.push_back(c);
      data.feature_names.push_back(header[c]);
    }
  }
  if (require_outcome && !y_col) {
    throw std::invalid_argument(path.string() + ": missing outcome column 'y'");
  }

  std::vector<double> values;
  std::vector<double> true_p;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    const std::string where = path.string() + " line " + std::to_string(row + 2);
    if (fields.size() != header.size()) {
      throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c : feature_cols) {
      values.push_back(parse_double(fields[c], where + " column '" + header[c] + "'"));
    }
    if (y_col) {
      const double label = parse_double(fields[*y_col], where + " column 'y'");
      if (label < 0 || label != std::floor(label)) {
        throw std::invalid_argument(where + " column 'y': labels must be non-negative integers");
      }
      data.y.push_back(static_cast<int>(label));
    }
    if (p_col) true_p.push_back(parse_double(fields[*p_col], where + " column 'true_p'"));
    ++row;
  }
  data.x = Matrix(row, feature_cols.size(), std::move(values));
  if (p_col) data.true_p = std::move(true_p);
  if (y_col) data.validate();
  return data;
}

}  // namespace probforest
