#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/evaluation.hpp"
#include "emoprobe/label.hpp"

namespace emoprobe {

using ProbPoint = std::array<double, kNumClasses>;
using PlanePoint = std::array<double, 2>;

// Top-2 principal axes of 7-d probe outputs.
struct PcaModel {
  ProbPoint mean{};
  std::array<ProbPoint, 2> components{};  // orthonormal rows
  std::array<double, 2> explained_variance{};
  double total_variance = 0.0;  // sum over all 7 axes
  std::uint64_t sample_count = 0;
};

// SVD of the centered data matrix. Variances use the 1/N normalization, so a
// dataset with every point duplicated fits the same model. Each component is
// signed so its largest-magnitude coordinate is positive.
// Throws ContractError for N < 3 and DataError when all points coincide.
PcaModel pca_fit(std::span<const ProbPoint> points);

PlanePoint pca_project(const PcaModel& model, const ProbPoint& point);
std::vector<PlanePoint> pca_project(const PcaModel& model, std::span<const ProbPoint> points);

struct BandwidthPolicy {
  enum class Kind { kScott, kFixed };
  Kind kind = Kind::kScott;
  double value = 0.0;  // used by kFixed

  static BandwidthPolicy scott() { return {}; }
  static BandwidthPolicy fixed(double h) { return {Kind::kFixed, h}; }
};

inline constexpr double kFallbackBandwidth = 1e-3;
inline constexpr std::size_t kDefaultGridSize = 200;
inline constexpr double kGridPadding = 3.0;  // in bandwidths

// Isotropic Gaussian KDE sampled on a grid x grid lattice spanning the data
// extremes padded by 3h on every side. density is row-major with y as the
// row index: density[iy * grid + ix].
struct DensityField {
  EmotionLabel label = EmotionLabel::kNeutral;
  std::size_t grid = 0;
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  double bandwidth = 0.0;
  // Scott's rule saw zero spread and kFallbackBandwidth was used instead.
  bool bandwidth_fallback = false;
  std::uint64_t sample_count = 0;
  std::vector<double> density;

  double dx() const { return (x_max - x_min) / static_cast<double>(grid - 1); }
  double dy() const { return (y_max - y_min) / static_cast<double>(grid - 1); }
  double x_at(std::size_t ix) const { return x_min + dx() * static_cast<double>(ix); }
  double y_at(std::size_t iy) const { return y_min + dy() * static_cast<double>(iy); }
  double at(std::size_t ix, std::size_t iy) const { return density[iy * grid + ix]; }
  double peak() const;
  // Riemann sum of the grid.
  double mass() const;
};

// h = n^(-1/6) * mean of the per-axis sample standard deviations.
double scott_bandwidth(std::span<const PlanePoint> points);

double kde_density_at(std::span<const PlanePoint> points, double bandwidth, PlanePoint p);

DensityField kde_fit(std::span<const PlanePoint> points, EmotionLabel label,
                     std::size_t grid = kDefaultGridSize, BandwidthPolicy policy = BandwidthPolicy::scott());

struct Polyline {
  std::vector<PlanePoint> vertices;
  bool closed = false;

  // Shoelace area of the closed ring (0 for open polylines).
  double area() const;
};

struct ContourLevel {
  double fraction = 0.0;   // of the field peak
  double threshold = 0.0;  // absolute density
  std::vector<Polyline> polylines;
};

struct ContourSet {
  EmotionLabel label = EmotionLabel::kNeutral;
  std::vector<ContourLevel> levels;
};

inline constexpr std::array<double, 2> kDefaultContourLevels = {0.25, 0.50};

// Marching-squares isolines at fraction * peak for each fraction. Saddle
// cells are resolved by the cell-centre average. A fraction above 1 yields
// an empty polyline list.
ContourSet contours_at(const DensityField& field, std::span<const double> fractions = kDefaultContourLevels);

bool point_in_polygon(const Polyline& ring, PlanePoint p);

struct ClassGeometry {
  DensityField field;
  ContourSet contours;
};

struct GeometryReport {
  PcaModel pca;
  std::vector<double> levels;
  std::vector<ClassGeometry> classes;  // classes with at least one point
  std::vector<std::uint64_t> utterance_ids;
  std::vector<EmotionLabel> references;
  std::vector<PlanePoint> projected;
};

// Fits PCA on the pooled probabilities of every class, then maps each class
// separately.
GeometryReport build_geometry(const SlicePredictions& predictions, std::span<const double> fractions,
                              std::size_t grid = kDefaultGridSize,
                              BandwidthPolicy policy = BandwidthPolicy::scott());

// include_grids adds the raw density grids (large).
std::string geometry_to_json(const GeometryReport& report, bool include_grids = false);

// Tab-separated: utterance_id, label, pc1, pc2.
std::string projected_points_table(const GeometryReport& report);

}  // namespace emoprobe
