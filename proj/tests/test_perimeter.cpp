#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

namespace {

void expect_within_budget(const PerimeterEstimate& p, double exact, const char* what) {
  EXPECT_LE(std::abs(p.value - exact), p.error_budget) << what << " " << to_string(p.method) << " value "
                                                       << p.value << " exact " << exact;
}

/// Simpson rule for the weighted length of the graph y = h(x).
template <class F, class H, class DH>
double graph_length(F f, H h, DH dh, double a, double b, int n = 20000) {
  const double dx = (b - a) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * dx;
    const double val = f(x, h(x)) * std::sqrt(1.0 + dh(x) * dh(x));
    s += val * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return s * dx / 3.0;
}

}  // namespace

TEST(Perimeter, GaussianHalfplaneAnchor) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::half_space({-1.0, 0.0}, 0.0), w, 256);
  const double exact = 1.0 / std::sqrt(2.0 * oracle::pi);
  expect_within_budget(perimeter_bv(w, E), exact, "half-plane");
  expect_within_budget(perimeter_minkowski(w, E), exact, "half-plane");
}

TEST(Perimeter, TiltedHalfplane) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const std::vector<double> v{std::cos(0.4), std::sin(0.4)};
  const auto E = rasterize(Region::half_space(v, 0.3), w, 256);
  const double exact = oracle::gaussian_halfspace_perimeter(0.5, v, 0.3);
  expect_within_budget(perimeter_bv(w, E), exact, "tilted");
  expect_within_budget(perimeter_minkowski(w, E), exact, "tilted");
}

TEST(Perimeter, GaussianUnitCircleAnchor) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 256);
  const double exact = oracle::gaussian_disc_perimeter(1.0);
  EXPECT_NEAR(exact, std::exp(-0.5), 1e-15);
  expect_within_budget(perimeter_bv(w, E), exact, "disc");
  expect_within_budget(perimeter_minkowski(w, E), exact, "disc");
}

TEST(Perimeter, UniformUnitCircleAnchor) {
  const auto w = WeightedDensity::uniform(Box::cube(2, 2.0));
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 256);
  expect_within_budget(perimeter_bv(w, E), 2.0 * oracle::pi, "uniform disc");
  expect_within_budget(perimeter_minkowski(w, E), 2.0 * oracle::pi, "uniform disc");
}

TEST(Perimeter, ThreeDimensionalGaussianSphere) {
  const auto w = WeightedDensity::standard_gaussian(3);
  const auto E = rasterize(Region::ball({0.0, 0.0, 0.0}, 1.0), w, 96);
  const double exact = 4.0 * oracle::pi * std::exp(-0.5) / std::pow(2.0 * oracle::pi, 1.5);
  expect_within_budget(perimeter_bv(w, E), exact, "sphere");
}

TEST(Perimeter, LogisticHalfLineMinkowski) {
  const auto w = WeightedDensity::logistic_product({1.0});
  const auto E = rasterize(Region::half_space({-1.0}, 0.0), w, 4096);
  const auto p = perimeter_minkowski(w, E);
  EXPECT_NEAR(p.value, oracle::logistic_pdf(0.0), 1e-4);
  EXPECT_NEAR(perimeter_bv(w, E).value, 0.25, 1e-4);
}

TEST(Perimeter, GraphFormulaMatchesQuadrature) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto h = [](double x) { return 0.3 + 0.2 * std::sin(x); };
  const auto dh = [](double x) { return 0.2 * std::cos(x); };
  const auto& box = w.box();
  auto hf = HeightField::over(Frame::identity(2), {box.lo[0]}, {box.hi[0]}, {2048});
  for (std::size_t i = 0; i < hf.size(); ++i) hf.values[i] = h(hf.cell_center(i)[0]);
  const auto f = [&](double x, double y) {
    const double p[2] = {x, y};
    return w.eval(p);
  };
  const double exact = graph_length(f, h, dh, box.lo[0], box.hi[0]);
  const auto pg = perimeter_graph(w, hf);
  EXPECT_NEAR(pg.value, exact, std::max(pg.error_budget, 1e-6));

  const auto E = rasterize(Region::subgraph(std::make_shared<HeightField>(hf)), w, 256);
  expect_within_budget(perimeter_bv(w, E), exact, "graph");
}

TEST(Perimeter, HalfspaceClosedFormIsRotationInvariant) {
  const auto w = WeightedDensity::isotropic_gaussian(2, 0.8, {0.5, -0.5});
  double first = -1.0;
  for (int k = 0; k < 16; ++k) {
    const double th = 2.0 * oracle::pi * k / 16;
    const std::vector<double> v{std::cos(th), std::sin(th)};
    const auto H = half_space_with_mass(w, v, 0.3);
    const double p = perimeter_halfspace(w, H).value;
    if (first < 0.0) first = p;
    EXPECT_NEAR(p, first, 1e-10);
    EXPECT_NEAR(p, oracle::gaussian_halfspace_perimeter(0.8, v, H.r, {0.5, -0.5}), 1e-10);
  }
}

TEST(Perimeter, HalfspaceQuadraturePathForLogistic) {
  const auto w = WeightedDensity::logistic_product({1.0, 1.0});
  const std::vector<double> e1{1.0, 0.0};
  EXPECT_NEAR(perimeter_halfspace(w, HalfSpace{e1, 0.0}).value, 0.25, 1e-9);
  const std::vector<double> v{std::cos(0.3), std::sin(0.3)};
  const auto fast = perimeter_halfspace(w, HalfSpace{v, 0.2});
  const auto E = rasterize(Region::half_space(v, 0.2), w, 256);
  expect_within_budget(perimeter_bv(w, E), fast.value, "logistic tilted");
}

TEST(Perimeter, SymmetrizedDiscDoesNotGrow) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.7, 0.2}, 0.9), w, 256);
  const auto pE = perimeter_bv(w, E);
  for (double th : {0.0, 1.0, 2.5}) {
    const std::vector<double> v{std::cos(th), std::sin(th)};
    const auto pS = perimeter_bv(w, symmetrize(w, E, v));
    EXPECT_LE(pS.value, pE.value + pE.error_budget + pS.error_budget) << th;
  }
}

TEST(Perimeter, EmptySetHasNoBoundary) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = IndicatorSet::empty(density_grid(w, 32));
  try {
    perimeter_bv(w, E);
    FAIL() << "expected no_boundary";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_boundary);
  }
}

TEST(Perimeter, GraphFormulaRejectsInfiniteHeights) {
  const auto w = WeightedDensity::standard_gaussian(2);
  auto hf = HeightField::over(Frame::identity(2), {-1.0}, {1.0}, {8});
  hf.values[3] = kInf;
  EXPECT_THROW(perimeter_graph(w, hf), Error);
}
