#include "emoprobe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <Eigen/SVD>
#include <json.hpp>

#include "emoprobe/errors.hpp"

namespace emoprobe {

// ---------------------------------------------------------------------------
// PCA

PcaModel pca_fit(std::span<const ProbPoint> points) {
  if (points.size() < 3) throw ContractError("pca_fit needs at least 3 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd data(n, kNumClasses);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < kNumClasses; ++j) data(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  const Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;
  if (data.cwiseAbs().maxCoeff() == 0.0) throw DataError("pca_fit: all points are identical (rank 0)");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();

  PcaModel model;
  model.sample_count = points.size();
  for (int j = 0; j < kNumClasses; ++j) model.mean[static_cast<std::size_t>(j)] = mean(j);
  for (Eigen::Index k = 0; k < sv.size(); ++k) model.total_variance += sv(k) * sv(k) / static_cast<double>(n);
  for (int k = 0; k < 2; ++k) {
    auto& row = model.components[static_cast<std::size_t>(k)];
    int largest = 0;
    for (int j = 0; j < kNumClasses; ++j) {
      row[static_cast<std::size_t>(j)] = v(j, k);
      if (std::abs(v(j, k)) > std::abs(v(largest, k))) largest = j;
    }
    if (row[static_cast<std::size_t>(largest)] < 0) {
      for (double& x : row) x = -x;
    }
    const double s = k < sv.size() ? sv(k) : 0.0;
    model.explained_variance[static_cast<std::size_t>(k)] = s * s / static_cast<double>(n);
  }
  return model;
}

PlanePoint pca_project(const PcaModel& model, const ProbPoint& point) {
  PlanePoint out{};
  for (std::size_t k = 0; k < 2; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kNumClasses; ++j) acc += (point[j] - model.mean[j]) * model.components[k][j];
    out[k] = acc;
  }
  return out;
}

std::vector<PlanePoint> pca_project(const PcaModel& model, std::span<const ProbPoint> points) {
  std::vector<PlanePoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(pca_project(model, p));
  return out;
}

// ---------------------------------------------------------------------------
// KDE

double DensityField::peak() const {
  return density.empty() ? 0.0 : *std::max_element(density.begin(), density.end());
}

double DensityField::mass() const {
  double sum = 0.0;
  for (double d : density) sum += d;
  return sum * dx() * dy();
}

double scott_bandwidth(std::span<const PlanePoint> points) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double sigma_sum = 0.0;
  for (std::size_t axis = 0; axis < 2; ++axis) {
    // a constant axis has exactly zero spread; the mean below would round
    const bool constant = std::all_of(points.begin(), points.end(),
                                      [&](const PlanePoint& p) { return p[axis] == points[0][axis]; });
    if (constant) continue;
    double mean = 0.0;
    for (const auto& p : points) mean += p[axis];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& p : points) ss += (p[axis] - mean) * (p[axis] - mean);
    sigma_sum += std::sqrt(ss / static_cast<double>(n - 1));
  }
  return std::pow(static_cast<double>(n), -1.0 / 6.0) * (sigma_sum / 2.0);
}

double kde_density_at(std::span<const PlanePoint> points, double h, PlanePoint p) {
  if (points.empty()) throw ContractError("kde_density_at: no points");
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  double sum = 0.0;
  for (const auto& q : points) {
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    sum += std::exp(-(dx * dx + dy * dy) * inv_two_h2);
  }
  return sum / (static_cast<double>(points.size()) * 2.0 * std::numbers::pi * h * h);
}

DensityField kde_fit(std::span<const PlanePoint> points, EmotionLabel label, std::size_t grid,
                     BandwidthPolicy policy) {
  if (points.empty()) throw ContractError("kde_fit needs at least one point");
  if (grid < 2) throw ContractError("kde_fit grid size must be >= 2");

  DensityField field;
  field.label = label;
  field.grid = grid;
  field.sample_count = points.size();
  if (policy.kind == BandwidthPolicy::Kind::kFixed) {
    if (!(policy.value > 0.0) || !std::isfinite(policy.value)) throw ContractError("fixed bandwidth must be > 0");
    field.bandwidth = policy.value;
  } else {
    const double h = scott_bandwidth(points);
    if (h > 0.0 && std::isfinite(h)) {
      field.bandwidth = h;
    } else {
      field.bandwidth = kFallbackBandwidth;
      field.bandwidth_fallback = true;
    }
  }
  const double h = field.bandwidth;

  double x_lo = points[0][0], x_hi = points[0][0], y_lo = points[0][1], y_hi = points[0][1];
  for (const auto& p : points) {
    x_lo = std::min(x_lo, p[0]);
    x_hi = std::max(x_hi, p[0]);
    y_lo = std::min(y_lo, p[1]);
    y_hi = std::max(y_hi, p[1]);
  }
  field.x_min = x_lo - kGridPadding * h;
  field.x_max = x_hi + kGridPadding * h;
  field.y_min = y_lo - kGridPadding * h;
  field.y_max = y_hi + kGridPadding * h;
  field.density.assign(grid * grid, 0.0);

  // The Gaussian kernel factorizes into x and y terms.
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  std::vector<double> ex(grid), ey(grid);
  for (const auto& p : points) {
    for (std::size_t i = 0; i < grid; ++i) {
      const double dx = field.x_at(i) - p[0];
      const double dy = field.y_at(i) - p[1];
      ex[i] = std::exp(-dx * dx * inv_two_h2);
      ey[i] = std::exp(-dy * dy * inv_two_h2);
    }
    for (std::size_t iy = 0; iy < grid; ++iy) {
      const double wy = ey[iy];
      if (wy == 0.0) continue;
      double* row = field.density.data() + iy * grid;
      for (std::size_t ix = 0; ix < grid; ++ix) row[ix] += wy * ex[ix];
    }
  }
  const double norm = 1.0 / (static_cast<double>(points.size()) * 2.0 * std::numbers::pi * h * h);
  for (double& d : field.density) d *= norm;
  return field;
}

// ---------------------------------------------------------------------------
// Contours

double Polyline::area() const {
  if (!closed || vertices.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % vertices.size()];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(twice) / 2.0;
}

bool point_in_polygon(const Polyline& ring, PlanePoint p) {
  bool inside = false;
  const auto& v = ring.vertices;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i][1] > p[1]) != (v[j][1] > p[1])) {
      const double x = (v[j][0] - v[i][0]) * (p[1] - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0];
      if (p[0] < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

// Edge ids: 2 * (iy * grid + ix) for the horizontal edge from (ix, iy) to
// (ix + 1, iy); 2 * (iy * grid + ix) + 1 for the vertical edge from (ix, iy)
// to (ix, iy + 1).
struct EdgeTracer {
  const DensityField& field;
  double threshold;
  std::unordered_map<std::uint64_t, PlanePoint> points;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> links;

  std::uint64_t horizontal(std::size_t ix, std::size_t iy) const { return 2 * (iy * field.grid + ix); }
  std::uint64_t vertical(std::size_t ix, std::size_t iy) const { return 2 * (iy * field.grid + ix) + 1; }

  PlanePoint crossing(std::uint64_t edge) const {
    const std::size_t cell = edge / 2;
    const std::size_t ix = cell % field.grid;
    const std::size_t iy = cell / field.grid;
    const bool vert = edge % 2 == 1;
    const std::size_t jx = vert ? ix : ix + 1;
    const std::size_t jy = vert ? iy + 1 : iy;
    const double va = field.at(ix, iy);
    const double vb = field.at(jx, jy);
    double t = (threshold - va) / (vb - va);
    t = std::clamp(t, 0.0, 1.0);
    const double x = field.x_at(ix) + t * (field.x_at(jx) - field.x_at(ix));
    const double y = field.y_at(iy) + t * (field.y_at(jy) - field.y_at(iy));
    return {x, y};
  }

  void segment(std::uint64_t a, std::uint64_t b) {
    for (std::uint64_t e : {a, b}) {
      if (!points.contains(e)) points.emplace(e, crossing(e));
    }
    links[a].push_back(b);
    links[b].push_back(a);
  }

  void march() {
    const std::size_t g = field.grid;
    for (std::size_t iy = 0; iy + 1 < g; ++iy) {
      for (std::size_t ix = 0; ix + 1 < g; ++ix) {
        const double v00 = field.at(ix, iy), v10 = field.at(ix + 1, iy);
        const double v11 = field.at(ix + 1, iy + 1), v01 = field.at(ix, iy + 1);
        const int mask = (v00 >= threshold ? 1 : 0) | (v10 >= threshold ? 2 : 0) | (v11 >= threshold ? 4 : 0) |
                         (v01 >= threshold ? 8 : 0);
        if (mask == 0 || mask == 15) continue;
        const std::uint64_t bottom = horizontal(ix, iy);
        const std::uint64_t top = horizontal(ix, iy + 1);
        const std::uint64_t left = vertical(ix, iy);
        const std::uint64_t right = vertical(ix + 1, iy);
        if (mask == 5 || mask == 10) {
          const bool centre_in = (v00 + v10 + v11 + v01) / 4.0 >= threshold;
          // Cut around the corners that end up isolated.
          const bool cut_00_11 = (mask == 5) != centre_in;
          if (cut_00_11) {
            segment(left, bottom);
            segment(right, top);
          } else {
            segment(bottom, right);
            segment(top, left);
          }
          continue;
        }
        std::uint64_t hits[2];
        int n = 0;
        if (((mask & 1) != 0) != ((mask & 2) != 0)) hits[n++] = bottom;
        if (((mask & 2) != 0) != ((mask & 4) != 0)) hits[n++] = right;
        if (((mask & 8) != 0) != ((mask & 4) != 0)) hits[n++] = top;
        if (((mask & 1) != 0) != ((mask & 8) != 0)) hits[n++] = left;
        if (n == 2) segment(hits[0], hits[1]);
      }
    }
  }

  std::vector<Polyline> chain() {
    std::vector<Polyline> out;
    std::unordered_map<std::uint64_t, bool> used;
    // Deterministic start order.
    std::vector<std::uint64_t> order;
    order.reserve(links.size());
    for (const auto& [edge, nbrs] : links) order.push_back(edge);
    std::sort(order.begin(), order.end());

    auto walk = [&](std::uint64_t start) {
      Polyline line;
      std::uint64_t cur = start;
      used[start] = true;
      line.vertices.push_back(points.at(start));
      while (true) {
        std::uint64_t next = cur;
        for (std::uint64_t cand : links.at(cur)) {
          if (!used[cand]) {
            next = cand;
            break;
          }
        }
        if (next == cur) {
          const auto& nbrs = links.at(cur);
          line.closed = line.vertices.size() > 2 && links.at(start).size() == 2 &&
                        std::find(nbrs.begin(), nbrs.end(), start) != nbrs.end();
          break;
        }
        used[next] = true;
        line.vertices.push_back(points.at(next));
        cur = next;
      }
      return line;
    };

    // Open chains start at boundary crossings (one neighbour).
    for (std::uint64_t edge : order) {
      if (!used[edge] && links.at(edge).size() == 1) out.push_back(walk(edge));
    }
    for (std::uint64_t edge : order) {
      if (!used[edge]) out.push_back(walk(edge));
    }
    return out;
  }
};

}  // namespace

ContourSet contours_at(const DensityField& field, std::span<const double> fractions) {
  const double peak = field.peak();
  if (!(peak > 0.0)) throw ContractError("contours_at: field has no positive peak");
  ContourSet set;
  set.label = field.label;
  for (double fraction : fractions) {
    if (!(fraction > 0.0)) throw ContractError("contour level must be > 0");
    ContourLevel level;
    level.fraction = fraction;
    level.threshold = fraction * peak;
    if (fraction <= 1.0) {
      EdgeTracer tracer{field, level.threshold, {}, {}};
      tracer.march();
      level.polylines = tracer.chain();
    }
    set.levels.push_back(std::move(level));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Report

GeometryReport build_geometry(const SlicePredictions& predictions, std::span<const double> fractions,
                              std::size_t grid, BandwidthPolicy policy) {
  std::vector<ProbPoint> probs;
  probs.reserve(predictions.probs.size());
  for (const auto& p : predictions.probs) {
    ProbPoint q{};
    std::copy(p.begin(), p.end(), q.begin());
    probs.push_back(q);
  }
  GeometryReport report;
  report.pca = pca_fit(probs);
  report.levels.assign(fractions.begin(), fractions.end());
  report.projected = pca_project(report.pca, probs);
  report.utterance_ids = predictions.utterance_ids;
  report.references = predictions.references;

  for (EmotionLabel label : kAllLabels) {
    std::vector<PlanePoint> members;
    for (std::size_t i = 0; i < report.projected.size(); ++i) {
      if (predictions.references[i] == label) members.push_back(report.projected[i]);
    }
    if (members.empty()) continue;
    ClassGeometry cg;
    cg.field = kde_fit(members, label, grid, policy);
    cg.contours = contours_at(cg.field, fractions);
    report.classes.push_back(std::move(cg));
  }
  return report;
}

std::string geometry_to_json(const GeometryReport& r, bool include_grids) {
  using nlohmann::json;
  json j;
  j["pca"] = {{"mean", r.pca.mean},
              {"components", r.pca.components},
              {"explained_variance", r.pca.explained_variance},
              {"total_variance", r.pca.total_variance},
              {"sample_count", r.pca.sample_count}};
  j["levels"] = r.levels;
  json classes = json::array();
  for (const auto& cg : r.classes) {
    const auto& f = cg.field;
    json c;
    c["label"] = std::string(label_name(f.label));
    c["sample_count"] = f.sample_count;
    c["bandwidth"] = f.bandwidth;
    c["bandwidth_fallback"] = f.bandwidth_fallback;
    c["grid"] = {{"size", f.grid},
                 {"x_range", {f.x_min, f.x_max}},
                 {"y_range", {f.y_min, f.y_max}},
                 {"peak", f.peak()},
                 {"mass", f.mass()}};
    if (include_grids) c["grid"]["density"] = f.density;
    json levels = json::array();
    for (const auto& level : cg.contours.levels) {
      json polylines = json::array();
      for (const auto& line : level.polylines) {
        polylines.push_back({{"closed", line.closed}, {"vertices", line.vertices}});
      }
      levels.push_back({{"fraction", level.fraction}, {"threshold", level.threshold}, {"polylines", polylines}});
    }
    c["contours"] = levels;
    classes.push_back(c);
  }
  j["classes"] = classes;
  return j.dump(2) + "\n";
}

std::string projected_points_table(const GeometryReport& r) {
  std::ostringstream out;
  out << "utterance_id\tlabel\tpc1\tpc2\n";
  char buf[64];
  for (std::size_t i = 0; i < r.projected.size(); ++i) {
    out << r.utterance_ids[i] << '\t' << label_name(r.references[i]);
    std::snprintf(buf, sizeof(buf), "\t%.9g\t%.9g\n", r.projected[i][0], r.projected[i][1]);
    out << buf;
  }
  return out.str();
}

}  // namespace emoprobe
