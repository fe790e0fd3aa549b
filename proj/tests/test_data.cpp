#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "aelab/data.hpp"
#include "aelab/errors.hpp"
#include "doctest.h"

using namespace aelab;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double spiral_dist(double px, double py, double turns, double r0, double r1,
                   double t) {
  const double r = r0 + (r1 - r0) * t;
  const double a = kTwoPi * turns * t;
  const double dx = px - r * std::cos(a), dy = py - r * std::sin(a);
  return std::sqrt(dx * dx + dy * dy);
}

// Distance from a point to the spiral: dense grid then golden-section
// refinement, the independent on-curve oracle.
double dist_to_spiral(double px, double py, double turns, double r0,
                      double r1) {
  const int grid = 20000;
  double best_t = 0.0, best = 1e300;
  for (int i = 0; i <= grid; ++i) {
    const double t = static_cast<double>(i) / grid;
    const double d = spiral_dist(px, py, turns, r0, r1, t);
    if (d < best) {
      best = d;
      best_t = t;
    }
  }
  double lo = std::max(0.0, best_t - 2.0 / grid);
  double hi = std::min(1.0, best_t + 2.0 / grid);
  const double gr = 0.6180339887498949;
  for (int it = 0; it < 80; ++it) {
    const double m1 = hi - gr * (hi - lo);
    const double m2 = lo + gr * (hi - lo);
    if (spiral_dist(px, py, turns, r0, r1, m1) <
        spiral_dist(px, py, turns, r0, r1, m2))
      hi = m2;
    else
      lo = m1;
  }
  return spiral_dist(px, py, turns, r0, r1, 0.5 * (lo + hi));
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("spiral: degenerate parameters collapse to a single point") {
  const Dataset ds = gen_spiral(4, 0.0, 1.0, 1.0, 0.0, 5);
  REQUIRE(ds.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(ds.points(0, j) == 1.0);
    CHECK(ds.points(1, j) == 0.0);
  }
}

TEST_CASE("spiral: sigma=0 points lie on the curve to 1e-9") {
  const double turns = 2.0, r0 = 0.3, r1 = 2.0;
  const Dataset ds = gen_spiral(50, turns, r0, r1, 0.0, 11);
  for (std::size_t j = 0; j < ds.size(); ++j)
    CHECK(dist_to_spiral(ds.points(0, j), ds.points(1, j), turns, r0, r1) <
          1e-9);
}

TEST_CASE("spiral: deterministic per seed") {
  const Dataset a = gen_spiral(100, 2.0, 0.3, 2.0, 0.05, 7);
  const Dataset b = gen_spiral(100, 2.0, 0.3, 2.0, 0.05, 7);
  const Dataset c = gen_spiral(100, 2.0, 0.3, 2.0, 0.05, 8);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.points.size(); ++i)
    CHECK(a.points.data()[i] == b.points.data()[i]);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    any_diff = any_diff || a.points.data()[i] != c.points.data()[i];
  CHECK(any_diff);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.meta == b.meta);
}

TEST_CASE("spiral: invalid parameters raise ConfigError") {
  CHECK_THROWS_AS(gen_spiral(1, 2.0, 0.3, 2.0, 0.05, 1), ConfigError);
  CHECK_THROWS_AS(gen_spiral(10, 2.0, 2.0, 0.3, 0.05, 1), ConfigError);
  CHECK_THROWS_AS(gen_spiral(10, 2.0, 0.3, 2.0, -0.1, 1), ConfigError);
  CHECK_THROWS_AS(gen_spiral(10, -1.0, 0.3, 2.0, 0.1, 1), ConfigError);
}

TEST_CASE("split: disjoint, exhaustive, 80/20 by default") {
  const Dataset ds = gen_spiral(1000, 2.0, 0.3, 2.0, 0.05, 3);
  CHECK(ds.train.size() == 800);
  CHECK(ds.test.size() == 200);
  std::set<std::size_t> all(ds.train.begin(), ds.train.end());
  for (std::size_t i : ds.test) {
    CHECK(all.count(i) == 0);
    all.insert(i);
  }
  CHECK(all.size() == 1000);
  CHECK(*all.rbegin() == 999);
}

TEST_CASE("spiral: empirical noise std within 3% of sigma at n=10^4") {
  // Same seed with sigma=0 and sigma>0 gives aligned draws, so the
  // difference isolates the injected noise.
  const double sigma = 0.05;
  const std::size_t n = 10000;
  const Dataset clean = gen_spiral(n, 2.0, 0.3, 2.0, 0.0, 33);
  const Dataset noisy = gen_spiral(n, 2.0, 0.3, 2.0, sigma, 33);
  for (std::size_t coord = 0; coord < 2; ++coord) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = noisy.points(coord, j) - clean.points(coord, j);
      ss += d * d;
    }
    const double std_hat = std::sqrt(ss / static_cast<double>(n));
    CHECK(std_hat > 0.97 * sigma);
    CHECK(std_hat < 1.03 * sigma);
  }
}

TEST_CASE("polar grid: spacing, radii, counts") {
  const PolarGrid g = gen_polar_grid(4, 1, 2.0, 9);
  REQUIRE(g.rays.size() == 4);
  REQUIRE(g.circles.size() == 1);
  const double want[4] = {0.0, kTwoPi / 4.0, kTwoPi / 2.0, 3.0 * kTwoPi / 4.0};
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(g.rays[k].cols() == 9);
    const double x = g.rays[k](0, 8), y = g.rays[k](1, 8);
    double a = std::atan2(y, x);
    if (a < 0) a += kTwoPi;
    CHECK(a == doctest::Approx(want[k]).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < g.circles[0].cols(); ++j) {
    const double r = std::hypot(g.circles[0](0, j), g.circles[0](1, j));
    CHECK(r == doctest::Approx(2.0).epsilon(1e-12));
  }
  for (const auto& ray : g.rays)
    for (std::size_t j = 0; j < ray.cols(); ++j)
      CHECK(std::hypot(ray(0, j), ray(1, j)) <= 2.0 + 1e-12);
}

TEST_CASE("fixtures: line is collinear, circle has unit radii, strip is centered") {
  const Dataset line = gen_fixture(FixtureKind::Line, 200, 0.0, 13);
  // Centered second moment along the normal of the segment direction
  // vanishes for collinear data.
  double mx = 0.0, my = 0.0;
  for (std::size_t j = 0; j < line.size(); ++j) {
    mx += line.points(0, j);
    my += line.points(1, j);
  }
  mx /= 200.0;
  my /= 200.0;
  // Direction (2,1)/sqrt(5); normal (-1,2)/sqrt(5).
  double nn = 0.0;
  for (std::size_t j = 0; j < line.size(); ++j) {
    const double d = (-1.0 * (line.points(0, j) - mx) +
                      2.0 * (line.points(1, j) - my)) /
                     std::sqrt(5.0);
    nn += d * d;
  }
  CHECK(nn / 200.0 < 1e-24);

  const Dataset circle = gen_fixture(FixtureKind::Circle, 200, 0.0, 14);
  for (std::size_t j = 0; j < circle.size(); ++j)
    CHECK(std::fabs(std::hypot(circle.points(0, j), circle.points(1, j)) -
                    1.0) < 1e-12);

  const std::size_t n = 10000;
  const Dataset strip = gen_fixture(FixtureKind::Strip, n, 0.0, 15);
  double m2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) m2 += strip.points(1, j);
  m2 /= static_cast<double>(n);
  const double sigma2 = 1.0 / std::sqrt(12.0);  // std of U(-1/2, 1/2)
  CHECK(std::fabs(m2) < 3.0 * sigma2 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("CSV round-trip is bit-exact and meta regenerates the dataset") {
  const Dataset ds = gen_spiral(64, 2.0, 0.3, 2.0, 0.05, 21);
  const std::string csv = dataset_to_csv(ds);
  const Dataset back = dataset_from_csv(csv);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.points.size(); ++i)
    CHECK(back.points.data()[i] == ds.points.data()[i]);
  CHECK(back.train == ds.train);
  CHECK(back.meta == ds.meta);

  const Dataset regen = regenerate(ds.meta);
  for (std::size_t i = 0; i < ds.points.size(); ++i)
    CHECK(regen.points.data()[i] == ds.points.data()[i]);
}

TEST_CASE("CSV reader rejects tampered points") {
  const Dataset ds = gen_fixture(FixtureKind::Circle, 16, 0.0, 22);
  std::string csv = dataset_to_csv(ds);
  // Flip a leading digit of the final number so the parsed value moves.
  std::size_t p = csv.find_last_of(',') + 1;
  if (csv[p] == '-') ++p;
  csv[p] = csv[p] == '0' ? '1' : '0';
  CHECK_THROWS_AS(dataset_from_csv(csv), ParseError);
}

TEST_CASE("CSV reader accepts provenance-free files") {
  const std::string csv =
      "# meta: {\"generator\":\"file\"}\nx0,x1\n1.5,2.5\n-1,0.25\n";
  const Dataset ds = dataset_from_csv(csv);
  CHECK(ds.size() == 2);
  CHECK(ds.points(0, 0) == 1.5);
  CHECK(ds.points(1, 1) == 0.25);
}

}  // TEST_SUITE
