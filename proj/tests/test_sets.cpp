#include "ehrhard/sets.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

namespace {

/// Sub-sampled occupancy misplaces at most half a sub-sample width of the
/// boundary: mass error <= Per * h / (2 s).
double quantization(const IndicatorSet& E, double per) {
  return per * E.geometry().min_spacing() / (2.0 * E.subcell());
}

double area(const IndicatorSet& E) {
  double s = 0.0;
  for (double o : E.occupancy()) s += o;
  return s * E.geometry().voxel_volume();
}

}  // namespace

TEST(Sets, DiscMassMatchesOracle) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 256);
  EXPECT_NEAR(mu_measure(w, E), oracle::gaussian_disc_mass(1.0), quantization(E, oracle::gaussian_disc_perimeter(1.0)));
}

TEST(Sets, HalfspaceMassIsExactToQuadrature) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const std::vector<double> v{std::cos(0.4), std::sin(0.4)};
  const auto E = rasterize(Region::half_space(v, 0.3), w, 256);
  EXPECT_NEAR(mu_measure(w, E), oracle::gaussian_halfspace_mass(0.5, v, 0.3),
              quantization(E, oracle::gaussian_halfspace_perimeter(0.5, v, 0.3)));
}

TEST(Sets, TailConventionCarriesHalfspaceMass) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::half_space({-1.0, 0.0}, 0.0), w, 64);
  EXPECT_EQ(E.tail().kind, TailConvention::Kind::halfspace_outside);
  EXPECT_NEAR(mu_measure(w, E), 0.5, 1e-9);
  const auto F = rasterize(Region::full(), w, 64);
  EXPECT_NEAR(mu_measure(w, F), 1.0, 1e-12);
  EXPECT_THROW(rasterize(Region::empty(), w, 64), Error);
}

TEST(Sets, UnionOfDisjointDiscsAddsArea) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto U = rasterize(Region::ball({-2.0, 0.0}, 0.5) | Region::ball({2.0, 0.0}, 0.5), w, 512);
  EXPECT_NEAR(area(U), 2.0 * oracle::pi * 0.25, quantization(U, 2.0 * oracle::pi));
}

TEST(Sets, BooleanOperations) {
  const auto A = Region::box({0.0, 0.0}, {2.0, 2.0});
  const auto B = Region::ball({2.0, 2.0}, 1.0);
  const double in[2] = {1.9, 1.9}, out[2] = {0.1, 0.1};
  EXPECT_TRUE((A & B).contains(in));
  EXPECT_FALSE((A & B).contains(out));
  EXPECT_FALSE((A - B).contains(in));
  EXPECT_TRUE((A - B).contains(out));
  const double far[2] = {2.9, 2.0};
  EXPECT_TRUE((A | B).contains(far));
}

TEST(Sets, SymmetricDifferenceOfShiftedHalfplanes) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  const auto A = rasterize(Region::half_space({-1.0, 0.0}, 0.0), g);
  const auto B = rasterize(Region::half_space({-1.0, 0.0}, -0.3), g);
  const double tol = quantization(A, 2.0 * oracle::phi(0.0));
  EXPECT_NEAR(symm_diff_measure(w, A, B), oracle::Phi(0.3) - 0.5, tol);
  EXPECT_NEAR(difference_measure(w, B, A), oracle::Phi(0.3) - 0.5, tol);
  EXPECT_NEAR(difference_measure(w, A, B), 0.0, 1e-12);
}

TEST(Sets, HalfspaceWithMassInvertsMass) {
  const auto w = WeightedDensity::isotropic_gaussian(2, 0.7, {0.2, 0.0});
  const std::vector<double> v{0.6, -0.8};
  for (double m : {0.05, 0.5, 0.93}) {
    const auto H = half_space_with_mass(w, v, m);
    EXPECT_NEAR(oracle::gaussian_halfspace_mass(0.7, v, H.r, {0.2, 0.0}), m, 1e-10);
  }
  EXPECT_EQ(half_space_with_mass(w, v, 0.0).r, kInf);
  EXPECT_EQ(half_space_with_mass(w, v, 1.0).r, -kInf);
}

TEST(Sets, EqualMeasureHalfspaceUsesSetMass) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 256);
  const std::vector<double> v{0.0, 1.0};
  const auto H = half_space_equal_measure(w, E, v);
  EXPECT_NEAR(oracle::gaussian_halfspace_mass(0.5, v, H.r), mu_measure(w, E), 1e-9);
}

TEST(Sets, ThreeDimensionalBall) {
  const auto w = WeightedDensity::standard_gaussian(3);
  const auto E = rasterize(Region::ball({0.0, 0.0, 0.0}, 1.0), w, 64);
  // chi distribution with 3 degrees of freedom
  const double exact = std::erf(1.0 / std::sqrt(2.0)) - std::sqrt(2.0 / oracle::pi) * std::exp(-0.5);
  EXPECT_NEAR(mu_measure(w, E), exact, 2e-3);
}

TEST(Sets, OccupancyOutsideUnitIntervalThrows) {
  const auto g = GridGeometry::cubic(Box::cube(2, 1.0), 4);
  EXPECT_THROW(IndicatorSet(g, std::vector<double>(g.size(), 1.5), 4, TailConvention::empty()), Error);
  EXPECT_THROW(IndicatorSet(g, std::vector<double>(3, 0.0), 4, TailConvention::empty()), Error);
}
