#include "ehrhard/analysis.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

namespace {

Density1D unequal_mixture() {
  return Density1D(Mixture1D{{Gaussian1D{-3.0, 12.5, 0.5 * std::sqrt(12.5 / oracle::pi)},
                              Gaussian1D{3.0, 50.0, 0.5 * std::sqrt(50.0 / oracle::pi)}}});
}

}  // namespace

TEST(PS1D, LogisticPassesBoth) {
  const auto r = ps_test_1d(Density1D::logistic());
  EXPECT_TRUE(r.symmetry.pass);
  EXPECT_NEAR(r.symmetry.median, 0.0, 1e-12);
  EXPECT_TRUE(r.subadditivity.pass);
  EXPECT_EQ(r.subadditivity.violations, 0u);
  EXPECT_TRUE(r.pass());
}

TEST(PS1D, GaussianPassesBoth) { EXPECT_TRUE(ps_test_1d(Density1D::standard_gaussian()).pass()); }

TEST(PS1D, ExponentialIsNotSymmetric) {
  const auto r = ps_test_1d(Density1D(Exponential1D{1.0}));
  EXPECT_FALSE(r.symmetry.pass);
  EXPECT_TRUE(r.subadditivity.pass);
}

TEST(PS1D, UnequalMixtureFailsSubadditivity) {
  const auto r = ps_test_1d(unequal_mixture());
  EXPECT_FALSE(r.symmetry.pass);
  EXPECT_FALSE(r.subadditivity.pass);
  EXPECT_GT(r.subadditivity.violations, 0u);
  EXPECT_GT(r.subadditivity.worst_excess, 0.1);
}

TEST(PS1D, ProfilesMatchOracles) {
  const auto g = Density1D::standard_gaussian();
  const auto l = Density1D::logistic();
  for (double p : {0.0, 0.05, 0.3, 0.5, 0.8, 1.0}) {
    EXPECT_NEAR(isoperimetric_profile(g, p), oracle::gaussian_profile(p), 1e-9) << p;
    EXPECT_NEAR(isoperimetric_profile(l, p), oracle::logistic_profile(p), 1e-9) << p;
  }
}

TEST(Product, IsotropicGaussianInRandomFrames) {
  const auto w = WeightedDensity::isotropic_gaussian(2, 0.5, {0.3, -0.2});
  std::mt19937_64 rng(17);
  for (int i = 0; i < 4; ++i) {
    const auto fr = Frame::random(2, rng);
    const auto r = product_structure_test(w, fr, default_levels(w));
    EXPECT_EQ(r.verdict, ProductVerdict::product);
    EXPECT_LE(r.max_dispersion, 1e-6);
    EXPECT_LE(r.roundtrip_error, 1e-4);
    // K(c) = -2c * c for a frame through the centre
    for (std::size_t l = 0; l < r.levels.size(); ++l) EXPECT_NEAR(r.K[l], -r.levels[l], 1e-9);
  }
}

TEST(Product, AnisotropicDispersionMatchesClosedForm) {
  const std::vector<double> c{1.0, 4.0};
  const auto w = WeightedDensity::anisotropic_gaussian(c);
  const auto fr = Frame::rotation2d(oracle::pi / 4);
  const auto levels = default_levels(w);
  const auto r = product_structure_test(w, fr, levels);
  EXPECT_EQ(r.verdict, ProductVerdict::not_product);
  EXPECT_GE(r.max_dispersion, 1e-2);
  const auto up = fr.fiber();
  for (std::size_t l = 0; l < r.levels.size(); ++l) {
    double sw = 0.0, s1 = 0.0, s2 = 0.0;
    std::vector<double> ks, fs;
    for (const auto& xp : r.base_points) {
      auto x = fr.base_point(xp);
      for (int i = 0; i < 2; ++i) x[i] += r.levels[l] * up[i];
      ks.push_back(oracle::anisotropic_K(c, x, up));
      fs.push_back(oracle::anisotropic_f(c, x));
      sw += fs.back();
      s1 += fs.back() * ks.back();
    }
    for (std::size_t i = 0; i < ks.size(); ++i) s2 += fs[i] * (ks[i] - s1 / sw) * (ks[i] - s1 / sw);
    EXPECT_NEAR(r.dispersion[l], std::sqrt(s2 / sw), 1e-9);
  }
}

TEST(Product, AxisFrameOfAnisotropicGaussianIsProduct) {
  const auto w = WeightedDensity::anisotropic_gaussian({1.0, 4.0});
  EXPECT_EQ(product_structure_test(w, Frame::identity(2), default_levels(w)).verdict, ProductVerdict::product);
}

TEST(Product, ZeroDensityIsDegenerate) {
  const auto w = WeightedDensity::zero(Box::cube(2, 2.0));
  const auto r = product_structure_test(w, Frame::identity(2), {-1.0, 0.0, 1.0});
  EXPECT_EQ(r.verdict, ProductVerdict::degenerate);
}

TEST(Quadratic, HalfSquareSatisfiesRecursion) {
  const auto fit = log_profile_recursion_check([](double a) { return -0.5 * a * a; });
  EXPECT_TRUE(fit.accepted);
  EXPECT_NEAR(fit.c, 0.5, 1e-12);
  EXPECT_LE(fit.recursion_residual, 1e-12);
}

TEST(Quadratic, RecoversGaussianExponent) {
  for (double c : {0.5, 1.3, 2.0}) {
    const auto w = WeightedDensity::isotropic_gaussian(2, c, {1.0, -0.5});
    const auto fit = log_profile_recursion_check(log_profile(w, {0.6, 0.8}));
    EXPECT_TRUE(fit.accepted);
    EXPECT_NEAR(fit.c, c, 1e-6);
    EXPECT_LE(fit.recursion_residual, 1e-8);
    EXPECT_LE(fit.scaling_residual, 1e-8);
  }
}

TEST(Quadratic, QuarticIsRejected) {
  const auto fit = log_profile_recursion_check([](double a) { return -a * a * a * a; });
  EXPECT_FALSE(fit.accepted);
  // k = 2 at alpha = 1: 2(-4) + 2(-1) versus -((sqrt2-1)^4 + (sqrt2+1)^4)
  const double s = std::sqrt(2.0);
  const double gap = std::abs(-10.0 + std::pow(s - 1, 4) + std::pow(s + 1, 4));
  EXPECT_GE(fit.recursion_residual, 1e-2);
  EXPECT_NEAR(gap, 24.0, 1e-12);
}

TEST(Quadratic, OddProfileIsNotEven) {
  try {
    log_profile_recursion_check([](double a) { return a; });
    FAIL() << "expected not_even";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_even);
  }
}

TEST(Search, FamilyRegionsAreWellFormed) {
  const std::vector<double> center{0.0, 0.0};
  for (auto f : {SetFamily::tilted_halfspace, SetFamily::strip, SetFamily::two_balls, SetFamily::wedge}) {
    const auto grid = detail::family_grid(f);
    ASSERT_FALSE(grid.empty());
    EXPECT_EQ(grid.front().size(), family_parameter_names(f).size());
    EXPECT_NO_THROW(family_region(f, grid.front(), center));
  }
}

TEST(Search, CoarseSearchOnIsotropicFindsNothing) {
  const auto w = WeightedDensity::standard_gaussian(2);
  SearchOptions o;
  o.families = {SetFamily::tilted_halfspace, SetFamily::strip};
  o.directions = 8;
  o.coarse_res = 64;
  o.resolution = 128;
  o.refine_rounds = 1;
  o.max_certify = 1;
  const auto r = violation_search(w, o);
  EXPECT_FALSE(r.found);
  EXPECT_GT(r.evaluations, 0u);
}

TEST(Search, MarginCheckOnAnisotropicHalfplane) {
  const auto w = WeightedDensity::anisotropic_gaussian({1.0, 4.0});
  const auto region = Region::half_space({1.0, 0.0}, 0.15);
  const std::vector<double> v{-0.904, 0.428};
  const auto m = margin_check(w, region, normalized(v), 128, PerimeterMethod::bv_boundary, 5.0, 4, {});
  EXPECT_GT(m.margin, 5.0 * m.budget);
  EXPECT_TRUE(m.passed);
}
