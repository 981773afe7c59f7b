#include "ehrhard/flow.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

namespace {

IndicatorSet hole_and_blob(const WeightedDensity& w, const GridGeometry& g) {
  const auto H0 = Region::half_space({1.0, 0.0}, 0.0);
  const auto hole = Region::ball({1.0, 1.0}, 0.4);
  const double mh = mu_measure(w, rasterize(hole, g));
  double lo = 0.01, hi = 1.5;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mu_measure(w, rasterize(Region::ball({-1.0, -1.0}, mid), g)) < mh ? lo : hi) = mid;
  }
  return rasterize((H0 - hole) | Region::ball({-1.0, -1.0}, lo), g);
}

}  // namespace

TEST(Flow, HoleAndBlobConverges) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 128);
  const auto E = hole_and_blob(w, g);
  FlowOptions o;
  o.track_perimeter = false;
  const auto tr = flow_to_halfspace(w, E, std::vector<double>{1.0, 0.0}, o);
  EXPECT_EQ(tr.status, FlowStatus::converged);
  ASSERT_FALSE(tr.steps.empty());
  EXPECT_LE(tr.steps.back().symm_diff, 0.05 * tr.initial_symm_diff);
  EXPECT_LE(tr.worst_fiber_increase(), tr.mass_tol);
  for (const auto& s : tr.steps) EXPECT_NEAR(s.mass, mu_measure(w, E), 1e-5);
}

TEST(Flow, TargetHalfspaceHasEqualMass) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 64);
  const auto E = rasterize(Region::ball({0.5, 0.5}, 1.0), g);
  FlowOptions o;
  o.max_steps = 2;
  o.track_perimeter = false;
  const auto tr = flow_to_halfspace(w, E, std::vector<double>{0.0, 1.0}, o);
  EXPECT_NEAR(w.halfspace_mass(tr.target.v, tr.target.r), mu_measure(w, E), 1e-9);
  EXPECT_LE(tr.steps.size(), 2u);
}

TEST(Flow, HalfspaceIsAlreadyConverged) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 64);
  // the grid is symmetric, so the rasterized half-plane has mass exactly 1/2
  const auto E = rasterize(Region::half_space({1.0, 0.0}, 0.0), g);
  const auto tr = flow_to_halfspace(w, E, std::vector<double>{1.0, 0.0});
  EXPECT_EQ(tr.status, FlowStatus::converged);
  EXPECT_TRUE(tr.steps.empty());
}

TEST(Flow, SubVoxelMismatchStalls) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 64);
  const auto E = rasterize(Region::half_space({1.0, 0.0}, 0.2), g);
  FlowOptions o;
  o.track_perimeter = false;
  const auto tr = flow_to_halfspace(w, E, std::vector<double>{1.0, 0.0}, o);
  EXPECT_NE(tr.status, FlowStatus::budget_exhausted);
  EXPECT_LE(tr.steps.size(), static_cast<std::size_t>(o.max_idle_steps));
}

TEST(Flow, RankedDirectionsPointIntoTarget) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 128);
  const auto E = hole_and_blob(w, g);
  const std::vector<double> v{1.0, 0.0};
  const auto H = half_space_equal_measure(w, E, v);
  const auto Hg = rasterize(Region::half_space(H.v, H.r), g);
  const auto dirs = rank_directions(w, E, Hg, H, 0.01 * w.eval(std::vector<double>{0.0, 0.0}), 1e-6, 3);
  ASSERT_FALSE(dirs.empty());
  for (const auto& d : dirs) {
    EXPECT_NEAR(norm(d.eta), 1.0, 1e-12);
    EXPECT_GT(dot(d.eta, v), 0.0);
  }
}

TEST(Flow, TraceCsvHasOneRowPerStep) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 96);
  FlowOptions o;
  o.max_steps = 3;
  o.track_perimeter = true;
  const auto tr = flow_to_halfspace(w, hole_and_blob(w, g), std::vector<double>{1.0, 0.0}, o);
  std::ostringstream os;
  tr.write_csv(os);
  const auto text = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), tr.steps.size() + 1);
  for (const auto& s : tr.steps) EXPECT_GT(s.perimeter, 0.0);
}
