#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probforest/dataset.hpp"
#include "probforest/forest.hpp"
#include "probforest/glm.hpp"
#include "probforest/matrix.hpp"

// Probability heatmaps over a two-dimensional slice of data space, with the
// remaining features held at fixed values.
namespace probforest::dataspace {

/// `bounded`: colours span the grid's own minimum and maximum.
/// `fixed`: colours span [0, 1], comparable across heatmaps.
enum class ColorScale { bounded, fixed };

enum class Colormap { viridis, grayscale };

struct SliceSpec {
  int x_feature = 0;
  int y_feature = 1;
  std::map<int, double> fixed_values;  ///< every feature except the two axes
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  int resolution = 200;
  int target_class = 1;
  ColorScale scale = ColorScale::bounded;

  /// Checks the axes, ranges and resolution, and that fixed_values covers
  /// every other feature; errors name the feature via `feature_names`.
  void validate(std::span<const std::string> feature_names) const;

  /// Parses a JSON slice. Features may be given by name or index. When
  /// `x_range` / `y_range` are absent they default to the observed range of
  /// `data`, which must then be supplied.
  static SliceSpec from_json(std::string_view text, std::span<const std::string> feature_names,
                             const Dataset* data = nullptr);
};

struct OverlayPoint {
  double x = 0.0;
  double y = 0.0;
  bool is_target = false;
};

struct HeatmapGrid {
  Matrix values;  ///< values(i, j) is the probability at (x_coords[j], y_coords[i])
  std::vector<double> x_coords;
  std::vector<double> y_coords;
  double color_min = 0.0;
  double color_max = 1.0;
  std::vector<OverlayPoint> overlay;
};

/// Maps an n x P input matrix to n x K class probabilities.
using ProbabilityFn = std::function<Matrix(const Matrix&)>;

/// Evaluates `model` at every grid vertex of the slice (axes linearly
/// spaced, endpoints included) and sets the colour bounds.
HeatmapGrid compute_grid(const ProbabilityFn& model, std::span<const std::string> feature_names,
                         const SliceSpec& slice);
HeatmapGrid compute_grid(const forest::Forest& model, const SliceSpec& slice, unsigned workers = 1);
HeatmapGrid compute_grid(const glm::SplineGlm& model, const SliceSpec& slice);

/// Adds the cases whose non-axis features equal the slice's fixed values
/// exactly. Coordinates outside the slice ranges are clamped to the edge.
HeatmapGrid overlay_cases(HeatmapGrid grid, const Dataset& data, const SliceSpec& slice);

/// `x,y,prob`, one row per vertex, y-major (all x for the first y, ...).
void export_grid_csv(const HeatmapGrid& grid, const std::filesystem::path& path);
/// Reads a file written by export_grid_csv. Colour bounds are recomputed
/// from the values; the overlay is not stored.
HeatmapGrid read_grid_csv(const std::filesystem::path& path);

/// RGB colour of t in [0, 1]; never pure red or pure green, which are
/// reserved for overlay points.
std::array<unsigned char, 3> colormap_rgb(Colormap map, double t);

/// Binary P6 pixmap, one pixel per vertex, highest y in the top row.
/// Target-class overlay points are red 3x3 squares, others green.
void export_ppm(const HeatmapGrid& grid, const std::filesystem::path& path,
                Colormap map = Colormap::viridis);

Colormap parse_colormap(std::string_view s);
ColorScale parse_color_scale(std::string_view s);

}  // namespace probforest::dataspace
