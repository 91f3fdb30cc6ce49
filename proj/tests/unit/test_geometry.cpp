#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emoprobe/errors.hpp"
#include "emoprobe/geometry.hpp"
#include "emoprobe/random.hpp"
#include "test_support.hpp"

using namespace emoprobe;

namespace {

double dot(const ProbPoint& a, const ProbPoint& b) {
  double s = 0;
  for (int i = 0; i < kNumClasses; ++i) s += a[i] * b[i];
  return s;
}

// Points a*u + b*v + offset on a 2-plane in 7-d.
std::vector<ProbPoint> plane_points(Rng& rng, std::size_t n, ProbPoint& u, ProbPoint& v) {
  ProbPoint offset{};
  for (int i = 0; i < kNumClasses; ++i) {
    u[i] = standard_normal(rng);
    v[i] = standard_normal(rng);
    offset[i] = standard_normal(rng);
  }
  std::vector<ProbPoint> pts(n);
  for (auto& p : pts) {
    const double a = 3 * standard_normal(rng), b = standard_normal(rng);
    for (int i = 0; i < kNumClasses; ++i) p[i] = offset[i] + a * u[i] + b * v[i];
  }
  return pts;
}

double radius(const PlanePoint& p, const PlanePoint& c = {0, 0}) { return std::hypot(p[0] - c[0], p[1] - c[1]); }

}  // namespace

TEST_CASE("PCA components are orthonormal and ordered") {
  Rng rng(1);
  std::vector<ProbPoint> pts(400);
  for (auto& p : pts)
    for (auto& x : p) x = standard_normal(rng);
  const auto m = pca_fit(pts);
  CHECK(std::abs(dot(m.components[0], m.components[0]) - 1) < 1e-8);
  CHECK(std::abs(dot(m.components[1], m.components[1]) - 1) < 1e-8);
  CHECK(std::abs(dot(m.components[0], m.components[1])) < 1e-8);
  CHECK(m.explained_variance[0] >= m.explained_variance[1]);
  CHECK(m.explained_variance[1] >= 0);
  // isotropic: the top two axes carry roughly 2/7 of the variance
  const double ratio = (m.explained_variance[0] + m.explained_variance[1]) / m.total_variance;
  CHECK(ratio > 2.0 / 7);
  CHECK(ratio < 0.45);
  CHECK(m.sample_count == 400);
}

TEST_CASE("PCA recovers an exact 2-plane") {
  Rng rng(2);
  ProbPoint u{}, v{};
  const auto pts = plane_points(rng, 200, u, v);
  const auto m = pca_fit(pts);
  CHECK(std::abs(m.total_variance - m.explained_variance[0] - m.explained_variance[1]) < 1e-10);
  const auto proj = pca_project(m, pts);
  for (int t = 0; t < 200; ++t) {
    const auto i = uniform_index(rng, pts.size()), j = uniform_index(rng, pts.size());
    double d7 = 0;
    for (int k = 0; k < kNumClasses; ++k) d7 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
    CHECK(std::abs(std::sqrt(d7) - radius(proj[i], proj[j])) < 1e-8);
  }
  // refitting on the projected data keeps the explained variance
  std::vector<ProbPoint> lifted(proj.size());
  for (std::size_t i = 0; i < proj.size(); ++i) lifted[i] = {proj[i][0], proj[i][1], 0, 0, 0, 0, 0};
  const auto m2 = pca_fit(lifted);
  CHECK(std::abs(m2.explained_variance[0] - m.explained_variance[0]) < 1e-8);
  CHECK(std::abs(m2.explained_variance[1] - m.explained_variance[1]) < 1e-8);
}

TEST_CASE("PCA projection matches a matrix-multiply oracle") {
  Rng rng(3);
  std::vector<ProbPoint> pts(100);
  for (auto& p : pts)
    for (auto& x : p) x = uniform_unit(rng);
  const auto m = pca_fit(pts);
  const auto proj = pca_project(m, pts);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int r = 0; r < 2; ++r) {
      double s = 0;
      for (int k = 0; k < kNumClasses; ++k) s += m.components[r][k] * (pts[i][k] - m.mean[k]);
      CHECK(std::abs(s - proj[i][r]) < 1e-10);
    }
  const auto at_mean = pca_project(m, m.mean);
  CHECK(std::abs(at_mean[0]) < 1e-15);
  CHECK(std::abs(at_mean[1]) < 1e-15);
  ProbPoint shifted = m.mean;
  for (int k = 0; k < kNumClasses; ++k) shifted[k] += m.components[0][k];
  const auto one = pca_project(m, shifted);
  CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(one[1]) < 1e-12);
}

TEST_CASE("PCA is unchanged by duplicating the data") {
  Rng rng(4);
  std::vector<ProbPoint> pts(60);
  for (auto& p : pts)
    for (auto& x : p) x = uniform_unit(rng);
  auto twice = pts;
  twice.insert(twice.end(), pts.begin(), pts.end());
  const auto a = pca_fit(pts), b = pca_fit(twice);
  for (int r = 0; r < 2; ++r) {
    CHECK(b.explained_variance[r] == doctest::Approx(a.explained_variance[r]).epsilon(1e-10));
    for (int k = 0; k < kNumClasses; ++k) CHECK(std::abs(a.components[r][k] - b.components[r][k]) < 1e-9);
  }
  for (int k = 0; k < kNumClasses; ++k) CHECK(std::abs(a.mean[k] - b.mean[k]) < 1e-12);
}

TEST_CASE("PCA degenerate inputs") {
  std::vector<ProbPoint> same(10, ProbPoint{0.1, 0.2, 0.1, 0.1, 0.3, 0.1, 0.1});
  CHECK_THROWS_AS(pca_fit(same), DataError);
  CHECK_THROWS_AS(pca_fit(std::span<const ProbPoint>(same.data(), 2)), ContractError);
}

TEST_CASE("single-point KDE peak and contour radii") {
  const double h = 0.1;
  const std::vector<PlanePoint> one = {{0.0, 0.0}};
  const auto f = kde_fit(one, EmotionLabel::kJoy, 201, BandwidthPolicy::fixed(h));
  const double peak = 1.0 / (2 * std::numbers::pi * h * h);
  CHECK(kde_density_at(one, h, {0, 0}) == doctest::Approx(peak).epsilon(1e-12));
  // grid is symmetric with an odd size, so the origin is a lattice point
  CHECK(std::abs(f.peak() - peak) / peak < 1e-9);
  CHECK(f.bandwidth == h);
  CHECK_FALSE(f.bandwidth_fallback);
  CHECK(f.x_min == doctest::Approx(-3 * h));
  CHECK(f.y_max == doctest::Approx(3 * h));

  const std::vector<double> levels = {0.5, 0.25};
  const auto cs = contours_at(f, levels);
  REQUIRE(cs.levels.size() == 2);
  const double cell = std::max(f.dx(), f.dy());
  const double r50 = h * std::sqrt(2 * std::log(2.0)), r25 = h * std::sqrt(2 * std::log(4.0));
  for (int li = 0; li < 2; ++li) {
    const auto& lvl = cs.levels[li];
    REQUIRE(lvl.polylines.size() == 1);
    CHECK(lvl.polylines[0].closed);
    CHECK(lvl.polylines[0].vertices.size() > 20);
    for (const auto& p : lvl.polylines[0].vertices) CHECK(std::abs(radius(p) - (li == 0 ? r50 : r25)) <= cell);
  }
  CHECK(std::abs(cs.levels[0].polylines[0].area()) < std::abs(cs.levels[1].polylines[0].area()));
  CHECK(std::abs(cs.levels[0].polylines[0].area()) == doctest::Approx(std::numbers::pi * r50 * r50).epsilon(0.02));
}

TEST_CASE("two-point KDE at the midpoint") {
  const double h = 0.3, d = 0.8;
  const std::vector<PlanePoint> two = {{-d / 2, 0.1}, {d / 2, 0.1}};
  const double expect = 2 * (1.0 / (2 * 2 * std::numbers::pi * h * h)) * std::exp(-d * d / (8 * h * h));
  CHECK(kde_density_at(two, h, {0, 0.1}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("KDE grid integrates to about one") {
  Rng rng(5);
  std::vector<PlanePoint> pts(500);
  for (auto& p : pts) p = {standard_normal(rng), 0.5 * standard_normal(rng) + 2};
  const auto f = kde_fit(pts, EmotionLabel::kAnger);
  CHECK(f.grid == kDefaultGridSize);
  CHECK(f.mass() >= 0.98);
  CHECK(f.mass() <= 1.01);
  for (double v : f.density) CHECK(v >= 0.0);
  const double h = scott_bandwidth(pts);
  CHECK(f.bandwidth == h);
  // Scott: n^(-1/6) times the mean per-axis standard deviation
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p[0];
    my += p[1];
  }
  mx /= 500;
  my /= 500;
  double sx = 0, sy = 0;
  for (const auto& p : pts) {
    sx += (p[0] - mx) * (p[0] - mx);
    sy += (p[1] - my) * (p[1] - my);
  }
  const double sigma = 0.5 * (std::sqrt(sx / 499) + std::sqrt(sy / 499));
  CHECK(h == doctest::Approx(std::pow(500.0, -1.0 / 6) * sigma).epsilon(1e-12));
  // grid value agrees with direct evaluation
  CHECK(f.at(37, 120) == doctest::Approx(kde_density_at(pts, h, {f.x_at(37), f.y_at(120)})).epsilon(1e-9));
}

TEST_CASE("KDE falls back when Scott sees no spread") {
  const std::vector<PlanePoint> same(20, PlanePoint{0.3, 0.3});
  const auto f = kde_fit(same, EmotionLabel::kFear, 51);
  CHECK(f.bandwidth_fallback);
  CHECK(f.bandwidth == kFallbackBandwidth);
  CHECK(f.peak() > 0);
}

TEST_CASE("KDE and contours shift with the data") {
  Rng rng(6);
  std::vector<PlanePoint> pts(200), moved(200);
  const PlanePoint shift = {1.7, -0.4};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = {standard_normal(rng), standard_normal(rng)};
    moved[i] = {pts[i][0] + shift[0], pts[i][1] + shift[1]};
  }
  const auto a = kde_fit(pts, EmotionLabel::kJoy, 101), b = kde_fit(moved, EmotionLabel::kJoy, 101);
  CHECK(b.x_min == doctest::Approx(a.x_min + shift[0]).epsilon(1e-12));
  CHECK(b.y_min == doctest::Approx(a.y_min + shift[1]).epsilon(1e-12));
  for (std::size_t i = 0; i < a.density.size(); ++i)
    CHECK(b.density[i] == doctest::Approx(a.density[i]).epsilon(1e-9).scale(1e-12));
  const auto ca = contours_at(a), cb = contours_at(b);
  const double cell = std::max(a.dx(), a.dy());
  for (std::size_t l = 0; l < ca.levels.size(); ++l) {
    REQUIRE(ca.levels[l].polylines.size() == cb.levels[l].polylines.size());
    for (std::size_t p = 0; p < ca.levels[l].polylines.size(); ++p) {
      const auto& va = ca.levels[l].polylines[p].vertices;
      const auto& vb = cb.levels[l].polylines[p].vertices;
      REQUIRE(va.size() == vb.size());
      for (std::size_t k = 0; k < va.size(); ++k) {
        CHECK(std::abs(vb[k][0] - va[k][0] - shift[0]) <= cell);
        CHECK(std::abs(vb[k][1] - va[k][1] - shift[1]) <= cell);
      }
    }
  }
}

TEST_CASE("bimodal sample gives two disjoint 50% contours") {
  Rng rng(7);
  std::vector<PlanePoint> pts;
  for (int i = 0; i < 300; ++i) {
    const double cx = i % 2 ? 10.0 : -10.0;
    pts.push_back({cx + 0.5 * standard_normal(rng), 0.5 * standard_normal(rng)});
  }
  const auto f = kde_fit(pts, EmotionLabel::kSadness);
  const std::vector<double> half = {0.5};
  const auto cs = contours_at(f, half);
  REQUIRE(cs.levels[0].polylines.size() == 2);
  const auto& p0 = cs.levels[0].polylines[0];
  const auto& p1 = cs.levels[0].polylines[1];
  CHECK(p0.closed);
  CHECK(p1.closed);
  for (const auto& v : p0.vertices) CHECK_FALSE(point_in_polygon(p1, v));
  for (const auto& v : p1.vertices) CHECK_FALSE(point_in_polygon(p0, v));
  const bool left_first = p0.vertices[0][0] < 0;
  CHECK(point_in_polygon(left_first ? p0 : p1, {-10, 0}));
  CHECK(point_in_polygon(left_first ? p1 : p0, {10, 0}));
}

TEST_CASE("contour nesting and bounds on unimodal samples") {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    std::vector<PlanePoint> pts(150);
    for (auto& p : pts) p = {standard_normal(rng), 0.3 * standard_normal(rng)};
    const auto f = kde_fit(pts, EmotionLabel::kJoy, 120);
    const auto cs = contours_at(f);
    for (const auto& lvl : cs.levels)
      for (const auto& pl : lvl.polylines)
        for (const auto& v : pl.vertices) {
          CHECK(v[0] >= f.x_min);
          CHECK(v[0] <= f.x_max);
          CHECK(v[1] >= f.y_min);
          CHECK(v[1] <= f.y_max);
        }
    double a25 = 0, a50 = 0;
    for (const auto& pl : cs.levels[0].polylines) a25 += std::abs(pl.area());
    for (const auto& pl : cs.levels[1].polylines) a50 += std::abs(pl.area());
    CHECK(a50 < a25);
  }
}

TEST_CASE("level above the peak gives no polylines") {
  const std::vector<PlanePoint> one = {{0, 0}};
  const auto f = kde_fit(one, EmotionLabel::kJoy, 31, BandwidthPolicy::fixed(1.0));
  const std::vector<double> high = {1.5};
  const auto cs = contours_at(f, high);
  REQUIRE(cs.levels.size() == 1);
  CHECK(cs.levels[0].polylines.empty());
}

TEST_CASE("point in polygon") {
  Polyline square{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, true};
  CHECK(point_in_polygon(square, {0.5, 0.5}));
  CHECK_FALSE(point_in_polygon(square, {1.5, 0.5}));
  CHECK(std::abs(square.area()) == doctest::Approx(1.0));
  Polyline open{{{0, 0}, {1, 0}}, false};
  CHECK(open.area() == 0.0);
}

TEST_CASE("geometry report over slice predictions") {
  Rng rng(9);
  SlicePredictions preds;
  for (std::uint64_t i = 0; i < 140; ++i) {
    const int c = static_cast<int>(i % 7);
    std::array<float, kNumClasses> p{};
    float rest = 1.f;
    for (int k = 0; k < kNumClasses; ++k) {
      p[k] = static_cast<float>(0.05 * uniform_unit(rng));
      rest -= p[k];
    }
    p[c] += rest;
    preds.utterance_ids.push_back(i);
    preds.references.push_back(label_from_code(c));
    preds.probs.push_back(p);
    preds.predicted.push_back(label_from_code(c));
  }
  const std::vector<double> levels = {0.25, 0.5};
  const auto g = build_geometry(preds, levels, 60);
  CHECK(g.classes.size() == 7);
  CHECK(g.projected.size() == 140);
  CHECK(g.pca.sample_count == 140);
  for (const auto& c : g.classes) {
    CHECK(c.field.sample_count == 20);
    CHECK(c.contours.levels.size() == 2);
  }
  const auto json = geometry_to_json(g);
  CHECK(json.find("\"density\"") == std::string::npos);
  CHECK(geometry_to_json(g, true).find("\"density\"") != std::string::npos);
  const auto table = projected_points_table(g);
  CHECK(std::count(table.begin(), table.end(), '\n') == 141);
}
