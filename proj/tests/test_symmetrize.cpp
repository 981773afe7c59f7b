#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

namespace {

/// The set {x : x.v >= c(x.t)} with c from the disc oracle, sampled with
/// s x s points per voxel.
IndicatorSet oracle_symmetrized_disc(const GridGeometry& g, const std::vector<double>& v,
                                     const std::vector<double>& p, double R, const TailConvention& tail) {
  const std::vector<double> t{-v[1], v[0]};
  const double x0 = p[0] * t[0] + p[1] * t[1], y0 = p[0] * v[0] + p[1] * v[1];
  const int s = 4;
  std::vector<double> occ(g.size());
  for (std::size_t lin = 0; lin < g.size(); ++lin) {
    double c[2];
    g.center(lin, c);
    int hits = 0;
    for (int a = 0; a < s; ++a)
      for (int b = 0; b < s; ++b) {
        const double x = c[0] + ((a + 0.5) / s - 0.5) * g.spacing(0);
        const double y = c[1] + ((b + 0.5) / s - 0.5) * g.spacing(1);
        const double h = oracle::disc_symmetrized_height(x * t[0] + y * t[1], x0, y0, R);
        hits += x * v[0] + y * v[1] >= h;
      }
    occ[lin] = static_cast<double>(hits) / (s * s);
  }
  return IndicatorSet(g, std::move(occ), 4, tail);
}

}  // namespace

class SymmetrizeDisc : public ::testing::TestWithParam<double> {};

TEST_P(SymmetrizeDisc, MatchesColumnOracle) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  const std::vector<double> p{0.5, 0.3};
  const auto E = rasterize(Region::ball(p, 1.0), g);
  const double th = GetParam();
  const std::vector<double> v{std::cos(th), std::sin(th)};
  const auto r = symmetrize_detailed(w, E, v);
  EXPECT_NEAR(r.mass_after, r.mass_before, 1e-6);
  const auto O = oracle_symmetrized_disc(g, v, p, 1.0, r.set.tail());
  // both sets misplace up to half a sub-sample width along the boundary
  const double tol = 2.0 * perimeter_bv(w, r.set).value * g.min_spacing() / (2.0 * E.subcell());
  EXPECT_LT(symm_diff_measure(w, r.set, O), tol) << th;
}

INSTANTIATE_TEST_SUITE_P(Directions, SymmetrizeDisc, ::testing::Values(0.0, 0.5 * oracle::pi, 0.3, 2.2, -1.0));

TEST(Symmetrize, AxisDirectionUsesColumnPath) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 64);
  EXPECT_TRUE(symmetrize_detailed(w, E, std::vector<double>{0.0, -1.0}).axis_path);
  EXPECT_FALSE(symmetrize_detailed(w, E, std::vector<double>{0.6, 0.8}).axis_path);
}

TEST(Symmetrize, HalfspaceAlongDirectionIsFixed) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  const std::vector<double> v{std::cos(0.9), std::sin(0.9)};
  const auto H = rasterize(Region::half_space(v, 0.4), g);
  EXPECT_LT(symm_diff_measure(w, symmetrize(w, H, v), H), 5e-4);
}

TEST(Symmetrize, IsIdempotent) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  const auto E = rasterize(Region::ball({0.4, -0.2}, 0.8) | Region::box({-2.0, -1.0}, {-1.0, 1.0}), g);
  for (double th : {0.0, 1.1}) {
    const std::vector<double> v{std::cos(th), std::sin(th)};
    const auto S = symmetrize(w, E, v);
    EXPECT_LT(symm_diff_measure(w, symmetrize(w, S, v), S), 2e-3) << th;
  }
}

TEST(Symmetrize, PreservesMassForLogisticWeight) {
  const auto w = WeightedDensity::logistic_product({1.0, 1.0});
  const auto g = density_grid(w, 128);
  const auto E = rasterize(Region::ball({1.0, 0.5}, 1.5) - Region::ball({1.0, 0.5}, 0.5), g);
  const std::vector<double> v{std::cos(2.0), std::sin(2.0)};
  const auto r = symmetrize_detailed(w, E, v);
  EXPECT_NEAR(r.mass_after, r.mass_before, 1e-6 * w.total());
}

TEST(Symmetrize, TransferToTargetDoesNotIncrease) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 128);
  const std::vector<double> v{1.0, 0.0};
  const auto E = rasterize((Region::half_space(v, 0.0) - Region::ball({1.0, 0.5}, 0.4)) |
                               Region::ball({-1.0, -0.5}, 0.4),
                           g);
  SymmetrizeOptions o;
  o.transfer_target = half_space_equal_measure(w, E, v);
  for (double th : {0.2, 0.7, -0.4}) {
    const std::vector<double> eta{std::cos(th), std::sin(th)};
    const auto r = symmetrize_detailed(w, E, eta, o);
    ASSERT_TRUE(r.transfer.has_value());
    EXPECT_LE(r.transfer->after, r.transfer->before + 1e-6) << th;
  }
}

TEST(Symmetrize, ThreeDimensional) {
  const auto w = WeightedDensity::standard_gaussian(3);
  const auto E = rasterize(Region::ball({0.3, 0.0, -0.2}, 1.0), w, 48);
  const auto r = symmetrize_detailed(w, E, std::vector<double>{0.0, 0.6, 0.8});
  EXPECT_NEAR(r.mass_after, r.mass_before, 1e-6);
}

TEST(Symmetrize, OneDimensionalGivesHalfLine) {
  const auto w = WeightedDensity::standard_gaussian(1);
  const auto E = rasterize(Region::box({-0.5}, {0.7}), w, 512);
  const auto S = symmetrize(w, E, std::vector<double>{1.0});
  const double m = oracle::Phi(0.7) - oracle::Phi(-0.5);
  const auto H = rasterize(Region::half_space({1.0}, oracle::Phi_inv(1.0 - m)), S.geometry());
  EXPECT_LT(symm_diff_measure(w, S, H), 1e-3);
}

TEST(Symmetrize, RejectsNonUnitDirection) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.0, 0.0}, 1.0), w, 32);
  EXPECT_THROW(symmetrize(w, E, std::vector<double>{1.0, 1.0}), Error);
  EXPECT_THROW(symmetrize(w, E, std::vector<double>{1.0}), Error);
}
