#include "ehrhard/io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ehrhard;

TEST(Io, EhgfRoundTrip) {
  GridField f;
  f.box = Box{{-1.0, -2.0}, {1.0, 2.0}};
  f.dims = {5, 7};
  for (int i = 0; i < 35; ++i) f.samples.push_back(0.1 * i);
  std::stringstream ss;
  write_ehgf(ss, f);
  EXPECT_EQ(ss.str().size(), 4 + 4 + 4 + 2 * 4 + 4 * 8 + 35 * 8u);
  const auto g = read_ehgf(ss);
  EXPECT_EQ(g.dims, f.dims);
  EXPECT_EQ(g.box.lo, f.box.lo);
  EXPECT_EQ(g.box.hi, f.box.hi);
  EXPECT_EQ(g.samples, f.samples);
}

TEST(Io, EhisRoundTripKeepsTail) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::half_space({0.6, 0.8}, 0.2) - Region::ball({1.0, 1.0}, 0.3), w, 64);
  std::stringstream ss;
  write_ehis(ss, E);
  const auto F = read_ehis(ss);
  EXPECT_EQ(F.occupancy(), E.occupancy());
  EXPECT_EQ(F.subcell(), E.subcell());
  EXPECT_EQ(F.tail().kind, E.tail().kind);
  EXPECT_EQ(F.tail().v, E.tail().v);
  EXPECT_EQ(F.tail().r, E.tail().r);
  EXPECT_EQ(mu_measure(w, F), mu_measure(w, E));
}

TEST(Io, BadMagicIsRejected) {
  std::stringstream ss("EHXX0000");
  try {
    read_ehis(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_error);
  }
  std::stringstream truncated;
  truncated.write("EHGF", 4);
  EXPECT_THROW(read_ehgf(truncated), Error);
}

TEST(Io, DensityJsonKinds) {
  const auto g = density_from_json(json::parse(R"({"kind": "isotropic_gaussian", "dim": 2, "params": {"c": 0.5}})"));
  EXPECT_NEAR(g.total(), 1.0, 1e-12);
  const auto a = density_from_json(json::parse(R"({"kind": "anisotropic_gaussian", "params": {"c": [1, 4]}})"));
  EXPECT_EQ(a.dim(), 2);
  const auto l = density_from_json(json::parse(R"({"kind": "logistic", "dim": 1})"));
  EXPECT_EQ(as_density1d(l).name(), "logistic");
  const auto p = density_from_json(json::parse(
      R"({"kind": "product_1d", "params": {"factors": [{"type": "gaussian"}, {"type": "logistic", "s": 2}]}})"));
  EXPECT_EQ(p.dim(), 2);
  const auto m = density_from_json(json::parse(
      R"({"kind": "product_1d", "params": {"factors": [{"type": "mixture", "parts": [{"mean": -1, "c": 2}, {"mean": 1, "c": 8}]}]}})"));
  EXPECT_EQ(as_density1d(m).name(), "mixture");
  const auto u = density_from_json(json::parse(R"({"kind": "uniform", "box": {"lo": [-2, -2], "hi": [2, 2]}})"));
  EXPECT_NEAR(u.total(), 16.0, 1e-12);
}

TEST(Io, DensityJsonErrors) {
  EXPECT_THROW(density_from_json(json::parse(R"({"dim": 2})")), Error);
  EXPECT_THROW(density_from_json(json::parse(R"({"kind": "nope", "dim": 2})")), Error);
  EXPECT_THROW(density_from_json(json::parse(R"({"kind": "isotropic_gaussian"})")), Error);
  EXPECT_THROW(density_from_json(json::parse(R"({"kind": "zero", "dim": 2})")), Error);
}

TEST(Io, DensityJsonRoundTrip) {
  const auto w = WeightedDensity::isotropic_gaussian(2, 1.3, {0.5, -0.5});
  const auto j = density_to_json(w);
  const auto v = density_from_json(j);
  const double x[2] = {0.1, 0.2};
  EXPECT_DOUBLE_EQ(v.eval(x), w.eval(x));
  EXPECT_EQ(v.box().lo, w.box().lo);
}

TEST(Io, GridSampledDensityFromFile) {
  GridField f;
  f.box = Box{{-4.0, -4.0}, {4.0, 4.0}};
  f.dims = {81, 81};
  for (int i = 0; i < 81; ++i)
    for (int j = 0; j < 81; ++j) {
      const double x = -4.0 + 0.1 * i, y = -4.0 + 0.1 * j;
      f.samples.push_back(std::exp(-0.5 * (x * x + y * y)) / (2.0 * oracle::pi));
    }
  const std::string path = ::testing::TempDir() + "/grid.ehgf";
  save_ehgf(path, f);
  const auto w = density_from_json(
      json::parse(R"({"kind": "grid_sampled", "params": {"file": ")" + path + R"(", "declared_tail": 1e-3}})"));
  EXPECT_NEAR(w.total(), 1.0, 2e-3);
}

TEST(Io, SetSpecTerms) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const double a[2] = {0.5, 0.0}, b[2] = {-0.5, 0.0}, c[2] = {0.0, 0.45};
  const auto H = parse_set_spec("halfspace:e1:0", w);
  EXPECT_TRUE(H.contains(a));
  EXPECT_FALSE(H.contains(b));
  const auto Hm = parse_set_spec("halfspace:-e1:0", w);
  EXPECT_TRUE(Hm.contains(b));
  const auto T = parse_set_spec("halfspace:0.6,0.8:0.3", w);
  EXPECT_TRUE(T.contains(c));
  const auto U = parse_set_spec("ball:0,0:0.5 / ball:0.5,0:0.2", w);
  EXPECT_FALSE(U.contains(a));
  EXPECT_TRUE(U.contains(c));
  const auto I = parse_set_spec("box:-1,-1:1,1 & strip:e2:0.4:2", w);
  EXPECT_TRUE(I.contains(c));
  EXPECT_FALSE(I.contains(a));
  EXPECT_TRUE(parse_set_spec("empty | full", w).contains(a));
  const auto M = parse_set_spec("halfmass:e2:0.25", w);
  EXPECT_NEAR(M.as_halfspace()->r, oracle::Phi_inv(0.75), 1e-9);
}

TEST(Io, SetSpecErrors) {
  const auto w = WeightedDensity::standard_gaussian(2);
  for (const char* bad : {"", "ball:0,0", "halfspace:e3:0", "ball:0,0,0:1", "blob:1", "ball:a,b:1", "full |"})
    EXPECT_THROW(parse_set_spec(bad, w), Error) << bad;
}

TEST(Io, ReportJsonShapes) {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto j = to_json(perimeter_halfspace(w, HalfSpace{{1.0, 0.0}, 0.0}));
  EXPECT_EQ(j.at("method"), "halfspace_closed_form");
  EXPECT_NEAR(j.at("value").get<double>(), 1.0 / std::sqrt(2.0 * oracle::pi), 1e-12);
  const auto ps = to_json(ps_test_1d(Density1D::logistic()));
  EXPECT_EQ(ps.at("symmetry").at("verdict"), "PASS");
  EXPECT_EQ(ps.at("subadditivity").at("verdict"), "PASS");
}
