#include "probforest/dataspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace probforest::dataspace {

namespace {

std::string feature_label(std::span<const std::string> names, int f) {
  if (f >= 0 && static_cast<std::size_t>(f) < names.size()) return "'" + names[f] + "'";
  return "#" + std::to_string(f);
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Endpoints exact, interior points computed from the index alone.
    v[static_cast<std::size_t>(i)] = i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1);
  }
  return v;
}

void set_color_bounds(HeatmapGrid& grid, ColorScale scale) {
  if (scale == ColorScale::fixed) {
    grid.color_min = 0.0;
    grid.color_max = 1.0;
    return;
  }
  const auto values = grid.values.data();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  grid.color_min = *lo;
  grid.color_max = *hi;
}

int resolve_feature(const nlohmann::json& v, std::span<const std::string> names, const char* key) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument(std::string(key) + ": unknown feature '" + name + "'");
    return static_cast<int>(it - names.begin());
  }
  throw std::invalid_argument(std::string(key) + ": expected a feature name or index");
}

}  // namespace

void SliceSpec::validate(std::span<const std::string> feature_names) const {
  const int p = static_cast<int>(feature_names.size());
  if (x_feature < 0 || x_feature >= p) throw std::invalid_argument("slice: x_feature out of range");
  if (y_feature < 0 || y_feature >= p) throw std::invalid_argument("slice: y_feature out of range");
  if (x_feature == y_feature) throw std::invalid_argument("slice: x_feature and y_feature coincide");
  if (resolution < 2) throw std::invalid_argument("slice: resolution must be at least 2");
  if (!(x_min < x_max)) throw std::invalid_argument("slice: x_range is empty");
  if (!(y_min < y_max)) throw std::invalid_argument("slice: y_range is empty");
  if (target_class < 0) throw std::invalid_argument("slice: target_class must be non-negative");
  for (int f = 0; f < p; ++f) {
    if (f == x_feature || f == y_feature) continue;
    if (!fixed_values.contains(f)) {
      throw std::invalid_argument("slice: no fixed value for feature " + feature_label(feature_names, f));
    }
  }
  for (const auto& [f, v] : fixed_values) {
    if (f < 0 || f >= p) throw std::invalid_argument("slice: fixed value for unknown feature #" + std::to_string(f));
    if (f == x_feature || f == y_feature) {
      throw std::invalid_argument("slice: fixed value given for axis feature " + feature_label(feature_names, f));
    }
  }
}

SliceSpec SliceSpec::from_json(std::string_view text, std::span<const std::string> feature_names,
                               const Dataset* data) {
  const auto j = nlohmann::json::parse(text);
  SliceSpec s;
  try {
    s.x_feature = resolve_feature(j.at("x_feature"), feature_names, "x_feature");
    s.y_feature = resolve_feature(j.at("y_feature"), feature_names, "y_feature");
    if (j.contains("fixed")) {
      for (const auto& [key, value] : j.at("fixed").items()) {
        int f = 0;
        if (std::all_of(key.begin(), key.end(), [](unsigned char c) { return std::isdigit(c); }) &&
            std::find(feature_names.begin(), feature_names.end(), key) == feature_names.end()) {
          f = std::stoi(key);
        } else {
          f = resolve_feature(nlohmann::json(key), feature_names, "fixed");
        }
        s.fixed_values[f] = value.get<double>();
      }
    }
    auto range = [&](const char* key, int feature, double& lo, double& hi) {
      if (j.contains(key)) {
        const auto r = j.at(key).get<std::vector<double>>();
        if (r.size() != 2) throw std::invalid_argument(std::string(key) + ": expected [min, max]");
        lo = r[0];
        hi = r[1];
      } else if (data != nullptr && data->x.rows() > 0) {
        const auto col = data->x.column(static_cast<std::size_t>(feature));
        const auto [a, b] = std::minmax_element(col.begin(), col.end());
        lo = *a;
        hi = *b;
      } else {
        throw std::invalid_argument(std::string(key) + ": required when no data is supplied");
      }
    };
    if (s.x_feature >= 0 && s.x_feature < static_cast<int>(feature_names.size()))
      range("x_range", s.x_feature, s.x_min, s.x_max);
    if (s.y_feature >= 0 && s.y_feature < static_cast<int>(feature_names.size()))
      range("y_range", s.y_feature, s.y_min, s.y_max);
    if (j.contains("resolution")) s.resolution = j.at("resolution").get<int>();
    if (j.contains("target_class")) s.target_class = j.at("target_class").get<int>();
    if (j.contains("scale")) s.scale = parse_color_scale(j.at("scale").get<std::string>());
    for (const auto& [key, value] : j.items()) {
      static const char* known[] = {"x_feature", "y_feature", "fixed",  "x_range",
                                    "y_range",   "resolution", "target_class", "scale"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
          std::end(known)) {
        throw std::invalid_argument("slice: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("slice: ") + e.what());
  }
  s.validate(feature_names);
  return s;
}

HeatmapGrid compute_grid(const ProbabilityFn& model, std::span<const std::string> feature_names,
                         const SliceSpec& slice) {
  slice.validate(feature_names);
  const auto res = static_cast<std::size_t>(slice.resolution);
  HeatmapGrid grid;
  grid.x_coords = linspace(slice.x_min, slice.x_max, slice.resolution);
  grid.y_coords = linspace(slice.y_min, slice.y_max, slice.resolution);
  Matrix inputs(res * res, feature_names.size());
  for (std::size_t i = 0; i < res; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      auto row = inputs.row(i * res + j);
      for (const auto& [f, v] : slice.fixed_values) row[static_cast<std::size_t>(f)] = v;
      row[static_cast<std::size_t>(slice.x_feature)] = grid.x_coords[j];
      row[static_cast<std::size_t>(slice.y_feature)] = grid.y_coords[i];
    }
  }
  const Matrix probs = model(inputs);
  if (static_cast<std::size_t>(slice.target_class) >= probs.cols()) {
    throw std::invalid_argument("slice: target_class " + std::to_string(slice.target_class) +
                                " but the model has " + std::to_string(probs.cols()) + " classes");
  }
  grid.values = Matrix(res, res);
  for (std::size_t i = 0; i < res; ++i)
    for (std::size_t j = 0; j < res; ++j)
      grid.values(i, j) = probs(i * res + j, static_cast<std::size_t>(slice.target_class));
  set_color_bounds(grid, slice.scale);
  return grid;
}

HeatmapGrid compute_grid(const forest::Forest& model, const SliceSpec& slice, unsigned workers) {
  const auto names = model.feature_names().empty()
                         ? default_feature_names(static_cast<std::size_t>(model.n_features()))
                         : model.feature_names();
  return compute_grid([&](const Matrix& x) { return model.predict_proba(x, workers); }, names, slice);
}

HeatmapGrid compute_grid(const glm::SplineGlm& model, const SliceSpec& slice) {
  return compute_grid([&](const Matrix& x) { return model.predict(x); }, model.feature_names, slice);
}

HeatmapGrid overlay_cases(HeatmapGrid grid, const Dataset& data, const SliceSpec& slice) {
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    const auto row = data.x.row(i);
    const bool matches = std::all_of(slice.fixed_values.begin(), slice.fixed_values.end(), [&](const auto& kv) {
      return static_cast<std::size_t>(kv.first) < row.size() && row[static_cast<std::size_t>(kv.first)] == kv.second;
    });
    if (!matches) continue;
    OverlayPoint p;
    p.x = std::clamp(row[static_cast<std::size_t>(slice.x_feature)], slice.x_min, slice.x_max);
    p.y = std::clamp(row[static_cast<std::size_t>(slice.y_feature)], slice.y_min, slice.y_max);
    p.is_target = i < data.y.size() && data.y[i] == slice.target_class;
    grid.overlay.push_back(p);
  }
  return grid;
}

void export_grid_csv(const HeatmapGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "x,y,prob\n";
  for (std::size_t i = 0; i < grid.y_coords.size(); ++i) {
    for (std::size_t j = 0; j < grid.x_coords.size(); ++j) {
      out << format_double(grid.x_coords[j]) << ',' << format_double(grid.y_coords[i]) << ','
          << format_double(grid.values(i, j)) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

HeatmapGrid read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,prob", 0) != 0) {
    throw std::runtime_error(path.string() + ": expected header x,y,prob");
  }
  std::vector<double> xs, ys, ps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 3) throw std::runtime_error(where + ": expected 3 fields");
    xs.push_back(parse_double(f[0], where));
    ys.push_back(parse_double(f[1], where));
    ps.push_back(parse_double(f[2], where));
  }
  // The x axis repeats within each y row.
  std::size_t nx = 1;
  while (nx < xs.size() && ys[nx] == ys[0]) ++nx;
  if (xs.empty() || ps.size() % nx != 0) throw std::runtime_error(path.string() + ": grid is not rectangular");
  const std::size_t ny = ps.size() / nx;
  HeatmapGrid grid;
  grid.x_coords.assign(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(nx));
  for (std::size_t i = 0; i < ny; ++i) grid.y_coords.push_back(ys[i * nx]);
  grid.values = Matrix(ny, nx, ps);
  set_color_bounds(grid, ColorScale::bounded);
  return grid;
}

std::array<unsigned char, 3> colormap_rgb(Colormap map, double t) {
  t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
  auto byte = [](double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0))); };
  if (map == Colormap::grayscale) {
    const auto g = byte(255.0 * t);
    return {g, g, g};
  }
  // Viridis sampled at nine evenly spaced stops, interpolated linearly.
  static constexpr double stops[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                                         {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                                         {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
  const double pos = t * 8.0;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(pos), 7);
  const double w = pos - static_cast<double>(k);
  return {byte(stops[k][0] + w * (stops[k + 1][0] - stops[k][0])),
          byte(stops[k][1] + w * (stops[k + 1][1] - stops[k][1])),
          byte(stops[k][2] + w * (stops[k + 1][2] - stops[k][2]))};
}

void export_ppm(const HeatmapGrid& grid, const std::filesystem::path& path, Colormap map) {
  const std::size_t h = grid.values.rows();
  const std::size_t w = grid.values.cols();
  std::vector<unsigned char> pixels(w * h * 3);
  const double range = grid.color_max - grid.color_min;
  auto put = [&](std::size_t row, std::size_t col, std::array<unsigned char, 3> rgb) {
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<std::ptrdiff_t>((row * w + col) * 3));
  };
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double t = range > 0.0 ? (grid.values(i, j) - grid.color_min) / range : 0.0;
      put(h - 1 - i, j, colormap_rgb(map, t));
    }
  }
  auto nearest = [](const std::vector<double>& coords, double v) {
    const auto it = std::lower_bound(coords.begin(), coords.end(), v);
    if (it == coords.begin()) return std::size_t{0};
    if (it == coords.end()) return coords.size() - 1;
    const auto k = static_cast<std::size_t>(it - coords.begin());
    return v - coords[k - 1] <= coords[k] - v ? k - 1 : k;
  };
  for (const auto& p : grid.overlay) {
    if (w == 0 || h == 0) break;
    const std::size_t col = nearest(grid.x_coords, p.x);
    const std::size_t row = h - 1 - nearest(grid.y_coords, p.y);
    const std::array<unsigned char, 3> color =
        p.is_target ? std::array<unsigned char, 3>{255, 0, 0} : std::array<unsigned char, 3>{0, 255, 0};
    for (std::size_t r = row == 0 ? 0 : row - 1; r <= std::min(row + 1, h - 1); ++r)
      for (std::size_t c = col == 0 ? 0 : col - 1; c <= std::min(col + 1, w - 1); ++c) put(r, c, color);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Colormap parse_colormap(std::string_view s) {
  if (s == "viridis") return Colormap::viridis;
  if (s == "grayscale") return Colormap::grayscale;
  throw std::invalid_argument("unknown colormap '" + std::string(s) + "' (expected viridis or grayscale)");
}

ColorScale parse_color_scale(std::string_view s) {
  if (s == "bounded") return ColorScale::bounded;
  if (s == "fixed") return ColorScale::fixed;
  throw std::invalid_argument("unknown colour scale '" + std::string(s) + "' (expected bounded or fixed)");
}

}  // namespace probforest::dataspace
