// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Pass a criterion number (1-8) to run only that one.

#include "ehrhard/ehrhard.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

using namespace ehrhard;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Randomized 2D suite shared by criteria 1 and 2

Region random_piece(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.5, 1.5), R(0.3, 1.2), A(0.0, 2.0 * kPi);
  const int k = static_cast<int>(rng() % 3);
  if (k == 0) return Region::ball({U(rng), U(rng)}, R(rng));
  if (k == 1) {
    const double x = U(rng), y = U(rng);
    return Region::box({x, y}, {x + R(rng), y + R(rng)});
  }
  const double t = A(rng), a = U(rng);
  return Region::strip({std::cos(t), std::sin(t)}, a, a + R(rng));
}

struct SuiteCase {
  IndicatorSet E;
  PerimeterEstimate per;
};

const std::vector<SuiteCase>& suite() {
  static const std::vector<SuiteCase> cases = [] {
    const auto w = WeightedDensity::standard_gaussian(2);
    const auto g = density_grid(w, 512);
    std::mt19937_64 rng(7);
    std::vector<SuiteCase> out;
    while (out.size() < 200) {
      const int m = 1 + static_cast<int>(rng() % 3);
      Region R = random_piece(rng);
      for (int i = 1; i < m; ++i) R = R | random_piece(rng);
      auto E = rasterize(R, g);
      auto p = perimeter_bv(w, E);
      out.push_back({std::move(E), p});
    }
    return out;
  }();
  return cases;
}

std::vector<double> suite_direction(int d) {
  const double th = 2.0 * kPi * (d + 0.37) / 8;
  return {std::cos(th), std::sin(th)};
}

Outcome criterion1() {
  const auto w = WeightedDensity::standard_gaussian(2);
  int ok = 0, total = 0;
  double worst = -kInf;
  for (const auto& c : suite())
    for (int d = 0; d < 8; ++d) {
      const auto S = symmetrize(w, c.E, suite_direction(d));
      const auto pS = perimeter_bv(w, S);
      const double excess = pS.value - c.per.value - (c.per.error_budget + pS.error_budget);
      worst = std::max(worst, (pS.value - c.per.value) / c.per.value);
      ok += excess <= 0.0;
      ++total;
    }
  return {ok == total, fmt("%d/%d cases with Per(S_v E) <= Per(E) + budget; largest relative change %+.2e", ok,
                           total, worst)};
}

Outcome criterion2() {
  const auto w = WeightedDensity::standard_gaussian(2);
  int ok = 0, total = 0;
  for (const auto& c : suite()) {
    const double m = mu_measure(w, c.E);
    for (int d = 0; d < 8; ++d) {
      const auto H = half_space_with_mass(w, suite_direction(d), m);
      const auto pH = perimeter_halfspace(w, H);
      ok += pH.value <= c.per.value + c.per.error_budget + pH.error_budget;
      ++total;
    }
  }
  const auto wa = WeightedDensity::isotropic_gaussian(2, 0.8, {0.4, -0.3});
  double lo = kInf, hi = -kInf;
  for (int k = 0; k < 16; ++k) {
    const double th = 2.0 * kPi * k / 16;
    const auto H = half_space_with_mass(wa, std::vector<double>{std::cos(th), std::sin(th)}, 0.3);
    const double p = perimeter_halfspace(wa, H).value;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return {ok == total && hi - lo <= 1e-6,
          fmt("%d/%d cases with Per(H) <= Per(E) + budget; 16-direction spread %.1e", ok, total, hi - lo)};
}

Outcome criterion3() {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int reached = 0, monotone = 0;
  double worst_fiber = -kInf, worst_grid = -kInf;
  std::string misses;
  for (int inst = 0; inst < 20; ++inst) {
    const double th = 2.0 * kPi * U(rng);
    const std::vector<double> v{std::cos(th), std::sin(th)}, t{-v[1], v[0]};
    const double r0 = -0.5 + U(rng);
    const double rh = 0.3 + 0.3 * U(rng);
    const double sp = r0 + rh + 0.1 + 0.8 * U(rng), tp = -1.5 + 3.0 * U(rng);
    const std::vector<double> p{sp * v[0] + tp * t[0], sp * v[1] + tp * t[1]};
    const auto H0 = Region::half_space(v, r0);
    const auto hole = Region::ball(p, rh);
    const double mh = mu_measure(w, rasterize(hole, g));
    const double sq = r0 - 0.2 - U(rng), tq = -1.5 + 3.0 * U(rng);
    const std::vector<double> q{sq * v[0] + tq * t[0], sq * v[1] + tq * t[1]};
    double lo = 0.01, hi = 2.0;
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (lo + hi);
      (mu_measure(w, rasterize(Region::ball(q, mid) - H0, g)) < mh ? lo : hi) = mid;
    }
    const auto E = rasterize((H0 - hole) | Region::ball(q, lo), g);
    FlowOptions o;
    o.track_perimeter = false;
    const auto tr = flow_to_halfspace(w, E, v, o);
    const double final_sd = tr.steps.empty() ? tr.initial_symm_diff : tr.steps.back().symm_diff;
    if (final_sd <= 0.05 * tr.initial_symm_diff)
      ++reached;
    else
      misses += fmt(" #%d(%s, %.1f%%)", inst, to_string(tr.status), 100.0 * final_sd / tr.initial_symm_diff);
    monotone += tr.worst_fiber_increase() <= tr.mass_tol;
    worst_fiber = std::max(worst_fiber, tr.worst_fiber_increase());
    worst_grid = std::max(worst_grid, tr.worst_grid_increase());
  }
  return {monotone == 20 && reached >= 18,
          fmt("monotone %d/20 (worst fiber-wise increase %.1e, voxel-level %.1e); reached 5%% in %d/20;", monotone,
              worst_fiber, worst_grid, reached) +
              (misses.empty() ? std::string(" no misses") : " misses" + misses)};
}

Outcome criterion4() {
  const auto r = ps_test_1d(Density1D::logistic(), 400);
  const auto w = WeightedDensity::logistic_product({1.0});
  const auto E = rasterize(Region::half_space({-1.0}, 0.0), w, 4096);
  const auto mk = perimeter_minkowski(w, E);
  const double err = std::abs(mk.value - 0.25);
  return {r.symmetry.pass && r.subadditivity.pass && r.subadditivity.violations == 0 && err <= 1e-4,
          fmt("symmetry %s, subadditivity %s (%zu violations over %zu pairs), Minkowski %.7f (|err| %.1e)",
              r.symmetry.pass ? "PASS" : "FAIL", r.subadditivity.pass ? "PASS" : "FAIL", r.subadditivity.violations,
              r.subadditivity.pairs, mk.value, err)};
}

Outcome criterion5() {
  const auto w = WeightedDensity::standard_gaussian(2);
  std::mt19937_64 rng(23);
  int product = 0;
  double worst_disp = 0.0, worst_rt = 0.0;
  for (int i = 0; i < 8; ++i) {
    const auto r = product_structure_test(w, Frame::random(2, rng), default_levels(w));
    product += r.verdict == ProductVerdict::product;
    worst_disp = std::max(worst_disp, r.max_dispersion);
    worst_rt = std::max(worst_rt, r.roundtrip_error);
  }
  const auto wa = WeightedDensity::anisotropic_gaussian({1.0, 4.0});
  const auto ra = product_structure_test(wa, Frame::rotation2d(kPi / 4), default_levels(wa));
  const bool ok = product == 8 && worst_disp <= 1e-6 && worst_rt <= 1e-4 &&
                  ra.verdict == ProductVerdict::not_product && ra.max_dispersion >= 1e-2;
  return {ok, fmt("isotropic: %d/8 product, dispersion %.1e, round trip %.1e; diag(1,4) at 45 deg: %s, dispersion %.3f",
                  product, worst_disp, worst_rt, to_string(ra.verdict), ra.max_dispersion)};
}

Outcome criterion6() {
  bool ok = true;
  double worst_c = 0.0, worst_res = 0.0;
  struct Case {
    int n;
    double c;
    std::vector<double> a, u;
  };
  const std::vector<Case> cases = {{2, 0.5, {0.0, 0.0}, {1.0, 0.0}},
                                   {2, 1.3, {1.0, -2.0}, {0.6, 0.8}},
                                   {3, 0.25, {0.5, 0.5, -1.0}, {0.0, 0.0, 1.0}},
                                   {2, 3.0, {-0.7, 0.2}, {std::cos(2.0), std::sin(2.0)}}};
  for (const auto& cs : cases) {
    const auto w = WeightedDensity::isotropic_gaussian(cs.n, cs.c, cs.a);
    const auto fit = log_profile_recursion_check(log_profile(w, cs.u));
    worst_c = std::max(worst_c, std::abs(fit.c - cs.c));
    worst_res = std::max({worst_res, fit.recursion_residual, fit.scaling_residual});
    ok = ok && fit.accepted;
  }
  const auto quartic = log_profile_recursion_check([](double a) { return -a * a * a * a; });
  ok = ok && worst_c <= 1e-6 && worst_res <= 1e-8 && !quartic.accepted && quartic.recursion_residual >= 1e-2;
  return {ok, fmt("c recovered within %.1e, residuals <= %.1e over k=1..9; quartic %s with residual %.3g", worst_c,
                  worst_res, quartic.accepted ? "accepted" : "rejected", quartic.recursion_residual)};
}

Outcome criterion7() {
  const auto wa = WeightedDensity::anisotropic_gaussian({1.0, 4.0});
  const auto ra = violation_search(wa);
  std::string detail;
  if (ra.best) {
    const auto& b = *ra.best;
    double worst_ratio = kInf;
    for (const auto& c : b.checks) worst_ratio = std::min(worst_ratio, c.margin / c.budget);
    detail = fmt("diag(1,4): %s (%s, margin %.3f, min margin/budget %.0f over %zu checks)",
                 ra.found ? "certified violation" : "none_found", to_string(b.family), b.margin, worst_ratio,
                 b.checks.size());
  } else {
    detail = "diag(1,4): none_found";
  }
  bool ok = ra.found;
  const std::vector<std::vector<double>> shifts = {{0.0, 0.0}, {1.2, -0.8}, {-1.0, 1.5}};
  int clean = 0;
  for (const auto& a : shifts) {
    const auto w = WeightedDensity::isotropic_gaussian(2, 0.5, a);
    const auto r = violation_search(w);
    clean += !r.found;
  }
  ok = ok && clean == 3;
  return {ok, detail + fmt("; isotropic and translates: none_found %d/3", clean)};
}

/// One estimator cross-check fixture.
struct Fixture {
  std::string name;
  WeightedDensity w;
  IndicatorSet E;
  std::optional<HeightField> graph;
  std::optional<double> exact;
};

Outcome criterion8() {
  std::vector<Fixture> fx;
  const auto gauss = WeightedDensity::standard_gaussian(2);
  const int res = 384;
  const auto halfplane = [&](const WeightedDensity& w, double th, double r) {
    const std::vector<double> v{std::cos(th), std::sin(th)};
    const std::vector<double> up{-v[0], -v[1]};
    double reach = 0.0;
    for (int i = 0; i < 2; ++i) reach = std::max({reach, std::abs(w.box().lo[i]), std::abs(w.box().hi[i])});
    auto hf = HeightField::over(Frame::along(up), {-1.5 * reach}, {1.5 * reach}, {4096}, -r);
    return Fixture{fmt("half-plane th=%.2f r=%.2f", th, r), w, rasterize(Region::half_space(v, r), w, res),
                   std::move(hf), std::nullopt};
  };
  for (auto [th, r] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.4, 0.3}, {1.1, -0.5}, {2.0, 0.8},
                                                               {3.5, -1.0}, {5.0, 0.1}}) {
    auto f = halfplane(gauss, th, r);
    f.exact = std::exp(-0.5 * r * r) / std::sqrt(2.0 * kPi);
    fx.push_back(std::move(f));
  }
  fx.push_back(halfplane(WeightedDensity::anisotropic_gaussian({1.0, 4.0}), 0.7, 0.2));
  fx.push_back(halfplane(WeightedDensity::logistic_product({1.0, 1.0}), 0.5, 0.3));
  for (auto [amp, freq, off] : std::vector<std::array<double, 3>>{
           {0.2, 1.0, 0.3}, {0.4, 0.5, -0.2}, {0.1, 2.0, 0.0}, {0.3, 1.5, 0.6}, {0.5, 0.7, -0.8}}) {
    const auto& box = gauss.box();
    auto hf = HeightField::over(Frame::identity(2), {box.lo[0]}, {box.hi[0]}, {4096});
    for (std::size_t i = 0; i < hf.size(); ++i) hf.values[i] = off + amp * std::sin(freq * hf.cell_center(i)[0]);
    auto E = rasterize(Region::subgraph(std::make_shared<HeightField>(hf)), gauss, res);
    fx.push_back({fmt("sine graph a=%.1f k=%.1f", amp, freq), gauss, std::move(E), std::move(hf), std::nullopt});
  }
  for (double R : {0.5, 1.0, 1.5})
    fx.push_back({fmt("Gaussian circle R=%.1f", R), gauss, rasterize(Region::ball({0.0, 0.0}, R), gauss, res),
                  std::nullopt, R * std::exp(-0.5 * R * R)});
  fx.push_back({"Gaussian circle off-centre", gauss, rasterize(Region::ball({0.6, -0.4}, 0.8), gauss, res),
                std::nullopt, std::nullopt});
  const auto uni = WeightedDensity::uniform(Box::cube(2, 2.0));
  fx.push_back({"uniform unit circle", uni, rasterize(Region::ball({0.0, 0.0}, 1.0), uni, res), std::nullopt,
                2.0 * kPi});
  fx.push_back({"uniform circle R=0.6", uni, rasterize(Region::ball({0.3, 0.2}, 0.6), uni, res), std::nullopt,
                1.2 * kPi});
  const auto lg = WeightedDensity::logistic_product({1.0, 1.0});
  fx.push_back({"logistic circle", lg, rasterize(Region::ball({0.5, 0.0}, 1.2), lg, res), std::nullopt,
                std::nullopt});

  int ok = 0;
  std::string bad;
  for (const auto& f : fx) {
    std::vector<PerimeterEstimate> est{perimeter_bv(f.w, f.E), perimeter_minkowski(f.w, f.E)};
    if (f.graph) est.push_back(perimeter_graph(f.w, *f.graph));
    bool agree = true;
    for (std::size_t i = 0; i < est.size(); ++i) {
      for (std::size_t j = i + 1; j < est.size(); ++j)
        agree = agree && std::abs(est[i].value - est[j].value) <= est[i].error_budget + est[j].error_budget;
      if (f.exact) agree = agree && std::abs(est[i].value - *f.exact) <= est[i].error_budget;
    }
    ok += agree;
    if (!agree) {
      bad += " [" + f.name + ":";
      for (const auto& e : est) bad += fmt(" %s=%.6f+-%.1e", to_string(e.method), e.value, e.error_budget);
      bad += "]";
    }
  }
  return {ok == static_cast<int>(fx.size()),
          fmt("%d/%zu fixtures agree within summed budgets (anchors 1/sqrt(2pi), e^-1/2, 2pi included)", ok,
              fx.size()) +
              bad};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"C1 Gaussian symmetrization inequality", criterion1},
      {"C2 half-space minimality", criterion2},
      {"C3 hole-filling flow", criterion3},
      {"C4 logistic PS certification", criterion4},
      {"C5 product structure", criterion5},
      {"C6 functional equations", criterion6},
      {"C7 anisotropic violation search", criterion7},
      {"C8 estimator cross-validation", criterion8}};
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
