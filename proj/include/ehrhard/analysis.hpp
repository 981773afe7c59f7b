#pragma once

// Characterization tools: the 1D PS criteria, product-structure detection via
// the logarithmic derivative K(c), the quadratic log-profile equations, and
// the search for perimeter-increasing symmetrizations.

#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"

#include <functional>
#include <map>

namespace ehrhard {

// ---------------------------------------------------------------------------
// 1D criteria

struct SymmetryResult {
  bool pass = false;
  double median = 0.0;
  double worst_t = 0.0;          // offset from the median with the largest deviation
  double worst_deviation = 0.0;  // |f(m - t) - f(m + t)| / max(f(m - t), f(m + t))
  double tolerance = 0.0;
};

/// Checks f(m - t) = f(m + t) around the median m on a t-grid reaching the
/// 1e-9 tails of the mass.
inline SymmetryResult symmetry_test_1d(const Density1D& f, double tolerance = 1e-6, int samples = 2000) {
  const double tot = f.total();
  require(tot > 0.0, ErrorCode::unsupported, "density has no mass");
  SymmetryResult out;
  out.tolerance = tolerance;
  // centre of the numerically flat part of F around total/2, or the declared
  // symmetry centre when F confirms it is a median
  const double half = 0.5 * tot * (1.0 - 1e-12);
  out.median = 0.5 * (f.quantile(half) + f.upper_quantile(half));
  if (const auto c = f.symmetry_center(); c && std::abs(f.cdf(*c) - f.upper(*c)) <= 1e-12 * tot)
    out.median = *c;
  const auto [lo_s, hi_s] = f.support();
  const double lo = f.quantile(1e-9 * tot), hi = f.upper_quantile(1e-9 * tot);
  // interior zeros break the median characterization
  for (int i = 1; i < samples; ++i) {
    const double t = lo + (hi - lo) * i / samples;
    require(t <= lo_s || t >= hi_s || f.eval(t) > 0.0, ErrorCode::unsupported,
            "density vanishes inside its support");
  }
  const double reach = std::max(out.median - lo, hi - out.median);
  for (int i = 1; i <= samples; ++i) {
    const double t = reach * i / samples;
    const double a = f.eval(out.median - t), b = f.eval(out.median + t);
    const double top = std::max(a, b);
    if (top <= 0.0) continue;
    const double dev = std::abs(a - b) / top;
    if (dev > out.worst_deviation) {
      out.worst_deviation = dev;
      out.worst_t = t;
    }
  }
  out.pass = out.worst_deviation <= tolerance;
  return out;
}

struct SubadditivityResult {
  bool pass = false;
  int grid = 0;
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double worst_p = 0.0, worst_q = 0.0;
  double worst_excess = 0.0;  // max of I(p + q) - I(p) - I(q)
  double tolerance = 0.0;
};

/// I(p) = f(F^{-1}(p)), with I(0) = I(total) = 0.
inline double isoperimetric_profile(const Density1D& f, double p) {
  const double tot = f.total();
  if (p <= 0.0 || p >= tot) return 0.0;
  const double t = 2.0 * p <= tot ? f.quantile(p) : f.upper_quantile(tot - p);
  return std::isfinite(t) ? f.eval(t) : 0.0;
}

/// Scans I(p + q) <= I(p) + I(q) over p = i T / N, q = j T / N with i + j < N.
inline SubadditivityResult i_subadditivity_test(const Density1D& f, int grid = 400, double tolerance = 1e-9) {
  require(grid >= 2, ErrorCode::invalid_input, "subadditivity grid needs at least two points");
  const double tot = f.total();
  require(tot > 0.0, ErrorCode::unsupported, "density has no mass");
  std::vector<double> I(grid);
  for (int i = 0; i < grid; ++i) I[i] = isoperimetric_profile(f, tot * i / grid);
  SubadditivityResult out;
  out.grid = grid;
  out.tolerance = tolerance;
  out.worst_excess = -kInf;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; i + j < grid; ++j) {
      ++out.pairs;
      const double excess = I[i + j] - I[i] - I[j];
      if (excess > tolerance) ++out.violations;
      if (excess > out.worst_excess) {
        out.worst_excess = excess;
        out.worst_p = tot * i / grid;
        out.worst_q = tot * j / grid;
      }
    }
  out.pass = out.violations == 0;
  return out;
}

struct PSReport {
  SymmetryResult symmetry;
  SubadditivityResult subadditivity;
  bool pass() const { return symmetry.pass && subadditivity.pass; }
};

inline PSReport ps_test_1d(const Density1D& f, int grid = 400, double symmetry_tol = 1e-6) {
  return {symmetry_test_1d(f, symmetry_tol), i_subadditivity_test(f, grid)};
}

// ---------------------------------------------------------------------------
// Product structure

enum class ProductVerdict { product, not_product, degenerate };

inline const char* to_string(ProductVerdict v) {
  switch (v) {
    case ProductVerdict::product: return "product";
    case ProductVerdict::not_product: return "not_product";
    case ProductVerdict::degenerate: return "degenerate";
  }
  return "unknown";
}

struct ProductOptions {
  int base_samples = 33;   // per base axis
  double radius = -1.0;    // half-width of the sampled region; negative: a quarter of the box
  double threshold = -1.0; // dispersion bound; negative: 1e-6 analytic, 1e-3 grid
  int ftc_substeps = 16;   // trapezoid sub-steps per level interval when integrating K
};

struct ProductReport {
  std::vector<double> levels;
  std::vector<double> K;           // f-weighted mean of K(c; x') per level
  std::vector<double> dispersion;  // f-weighted standard deviation per level
  std::vector<double> B;           // exp of the integral of K from the first level
  std::vector<std::vector<double>> base_points;
  std::vector<double> A;           // f(x', c_0) / B(c_0)
  double max_dispersion = 0.0;
  double threshold = 0.0;
  double roundtrip_error = 0.0;    // max relative |A B - f| over the samples
  ProductVerdict verdict = ProductVerdict::degenerate;
};

namespace detail {

inline std::vector<std::vector<double>> base_lattice(int m, int samples, double radius) {
  std::vector<std::vector<double>> pts;
  if (m == 0) return {{}};
  const auto coord = [&](int i) { return samples == 1 ? 0.0 : -radius + 2.0 * radius * i / (samples - 1); };
  if (m == 1)
    for (int i = 0; i < samples; ++i) pts.push_back({coord(i)});
  else
    for (int i = 0; i < samples; ++i)
      for (int j = 0; j < samples; ++j) pts.push_back({coord(i), coord(j)});
  return pts;
}

}  // namespace detail

/// Levels spread evenly over [-radius, radius] around the density centre.
inline std::vector<double> default_levels(const WeightedDensity& w, int count = 65, double radius = -1.0) {
  if (radius < 0.0) {
    double half = kInf;
    for (int i = 0; i < w.dim(); ++i) half = std::min(half, 0.5 * w.box().extent(i));
    radius = 0.5 * half;
  }
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(-radius + 2.0 * radius * i / (count - 1));
  return out;
}

/// Samples K(c; x') = (d f / d x_n) / f along the frame's fiber axis at each
/// level c, for x' on a lattice of the base, all offset by the density centre.
inline ProductReport product_structure_test(const WeightedDensity& w, const Frame& frame,
                                            std::vector<double> levels, const ProductOptions& opts = {}) {
  const int n = w.dim();
  require(frame.dim() == n, ErrorCode::invalid_input, "frame dimension mismatch");
  require(levels.size() >= 2, ErrorCode::invalid_input, "product test needs at least two levels");
  std::sort(levels.begin(), levels.end());
  ProductReport rep;
  rep.levels = levels;
  rep.threshold = opts.threshold >= 0.0 ? opts.threshold : (w.analytic() ? 1e-6 : 1e-3);
  if (w.is_zero()) return rep;

  double radius = opts.radius;
  if (radius < 0.0) {
    radius = kInf;
    for (int i = 0; i < n; ++i) radius = std::min(radius, 0.25 * w.box().extent(i));
  }
  const auto center = w.center();
  rep.base_points = detail::base_lattice(n - 1, opts.base_samples, radius);
  const auto up = frame.fiber();
  const auto point = [&](const std::vector<double>& xp, double c) {
    auto x = frame.base_point(xp);
    for (int i = 0; i < n; ++i) x[i] += center[i] + c * up[i];
    return x;
  };
  // weighted mean and spread of K over the base at level c
  const auto level_stats = [&](double c, bool& degenerate) {
    double sw = 0.0, s1 = 0.0, s2 = 0.0;
    std::vector<double> ks, fs;
    for (const auto& xp : rep.base_points) {
      const auto x = point(xp, c);
      const double f = w.eval(x);
      if (!(f >= 1e-300)) {
        degenerate = true;
        return std::pair{0.0, 0.0};
      }
      const double k = dot(w.grad(x), up) / f;
      ks.push_back(k);
      fs.push_back(f);
      sw += f;
      s1 += f * k;
    }
    const double mean = s1 / sw;
    for (std::size_t i = 0; i < ks.size(); ++i) s2 += fs[i] * (ks[i] - mean) * (ks[i] - mean);
    return std::pair{mean, std::sqrt(s2 / sw)};
  };

  bool degenerate = false;
  for (double c : levels) {
    const auto [mean, spread] = level_stats(c, degenerate);
    if (degenerate) return rep;
    rep.K.push_back(mean);
    rep.dispersion.push_back(spread);
    rep.max_dispersion = std::max(rep.max_dispersion, spread);
  }

  // FTC: B(c) = exp(int_{c_0}^{c} K), trapezoid on a refined level grid
  rep.B.assign(levels.size(), 1.0);
  const int sub = std::max(1, opts.ftc_substeps);
  double integral = 0.0;
  for (std::size_t l = 1; l < levels.size(); ++l) {
    const double a = levels[l - 1], b = levels[l];
    double prev = rep.K[l - 1];
    for (int s = 1; s <= sub; ++s) {
      const double c = a + (b - a) * s / sub;
      const double k = s == sub ? rep.K[l] : level_stats(c, degenerate).first;
      if (degenerate) return rep;
      integral += 0.5 * (prev + k) * (b - a) / sub;
      prev = k;
    }
    rep.B[l] = std::exp(integral);
  }
  for (const auto& xp : rep.base_points) rep.A.push_back(w.eval(point(xp, levels[0])) / rep.B[0]);
  for (std::size_t l = 0; l < levels.size(); ++l)
    for (std::size_t i = 0; i < rep.base_points.size(); ++i) {
      const double f = w.eval(point(rep.base_points[i], levels[l]));
      rep.roundtrip_error = std::max(rep.roundtrip_error, std::abs(rep.A[i] * rep.B[l] - f) / f);
    }
  rep.verdict = rep.max_dispersion <= rep.threshold ? ProductVerdict::product : ProductVerdict::not_product;
  return rep;
}

// ---------------------------------------------------------------------------
// Quadratic log profile

struct QuadraticFit {
  std::vector<double> alpha;
  std::vector<double> g;           // shifted so that g(0) = 0
  double c = 0.0;                  // least-squares fit g ~ -c alpha^2
  double fit_residual = 0.0;       // max |g + c alpha^2|
  double recursion_residual = 0.0; // max |2g(sqrt(k) a) + 2g(a) - g((sqrt(k)-1) a) - g((sqrt(k)+1) a)|
  double scaling_residual = 0.0;   // max |g(k a) - k^2 g(a)|
  double tolerance = 0.0;
  bool accepted = false;           // residuals within tolerance and c > 0
};

struct QuadraticOptions {
  std::vector<int> k = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> alpha;  // empty: 41 points on [-1, 1]
  double tolerance = 1e-8;
  double even_tolerance = 1e-8;
};

/// Verifies the functional equations of a log profile g on an alpha grid and
/// fits g ~ -c alpha^2. Tolerances are absolute, scaled by max(1, max |g|).
inline QuadraticFit log_profile_recursion_check(const std::function<double(double)>& g_in,
                                                const QuadraticOptions& opts = {}) {
  auto alpha = opts.alpha;
  if (alpha.empty())
    for (int i = 0; i <= 40; ++i) alpha.push_back(-1.0 + i / 20.0);
  const double g0 = g_in(0.0);
  const auto g = [&](double a) { return g_in(a) - g0; };

  QuadraticFit fit;
  fit.alpha = alpha;
  double scale = 1.0;
  for (double a : alpha) {
    fit.g.push_back(g(a));
    scale = std::max(scale, std::abs(fit.g.back()));
  }
  fit.tolerance = opts.tolerance * scale;
  for (double a : alpha)
    require(std::abs(g(a) - g(-a)) <= opts.even_tolerance * scale, ErrorCode::not_even,
            "log profile is not even around the centre");

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a2 = alpha[i] * alpha[i];
    num += fit.g[i] * a2;
    den += a2 * a2;
  }
  require(den > 0.0, ErrorCode::invalid_input, "alpha grid needs a nonzero point");
  fit.c = -num / den;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    fit.fit_residual = std::max(fit.fit_residual, std::abs(fit.g[i] + fit.c * alpha[i] * alpha[i]));

  for (int k : opts.k) {
    const double r = std::sqrt(static_cast<double>(k));
    for (double a : alpha) {
      const double rec = 2.0 * g(r * a) + 2.0 * g(a) - g((r - 1.0) * a) - g((r + 1.0) * a);
      fit.recursion_residual = std::max(fit.recursion_residual, std::abs(rec));
      fit.scaling_residual = std::max(fit.scaling_residual, std::abs(g(k * a) - k * k * g(a)));
    }
  }
  fit.accepted = fit.recursion_residual <= fit.tolerance && fit.scaling_residual <= fit.tolerance &&
                 fit.fit_residual <= fit.tolerance && fit.c > 0.0;
  return fit;
}

/// alpha -> log f(centre + alpha u) for a unit vector u through the density
/// centre (its symmetry centre for Gaussians).
inline std::function<double(double)> log_profile(const WeightedDensity& w, std::vector<double> u) {
  u = normalized(u);
  require(static_cast<int>(u.size()) == w.dim(), ErrorCode::invalid_input, "profile direction dimension mismatch");
  const auto center = w.center();
  if (auto gp = w.gaussian_params()) {
    // closed-form log avoids underflow far from the centre
    return [gp = *gp, u, center](double a) {
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = center[i] + a * u[i] - gp.a[i];
        s += gp.c[i] * d * d;
      }
      return std::log(gp.C) - s;
    };
  }
  return [w, u, center](double a) {
    std::vector<double> x(center);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += a * u[i];
    return std::log(w.eval(x));
  };
}

// ---------------------------------------------------------------------------
// Violation search

enum class SetFamily { tilted_halfspace, strip, two_balls, wedge };

inline const char* to_string(SetFamily f) {
  switch (f) {
    case SetFamily::tilted_halfspace: return "tilted_halfspace";
    case SetFamily::strip: return "strip";
    case SetFamily::two_balls: return "two_balls";
    case SetFamily::wedge: return "wedge";
  }
  return "unknown";
}

inline std::vector<std::string> family_parameter_names(SetFamily f) {
  switch (f) {
    case SetFamily::tilted_halfspace: return {"theta", "offset"};
    case SetFamily::strip: return {"theta", "middle", "width"};
    case SetFamily::two_balls: return {"distance", "theta", "radius1", "radius2"};
    case SetFamily::wedge: return {"theta", "half_opening", "apex"};
  }
  return {};
}

namespace detail {

inline std::vector<double> unit2(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Lower and upper bounds for each family parameter during refinement.
inline std::vector<std::pair<double, double>> family_bounds(SetFamily f) {
  const double pi = std::numbers::pi;
  switch (f) {
    case SetFamily::tilted_halfspace: return {{-10 * pi, 10 * pi}, {-2.0, 2.0}};
    case SetFamily::strip: return {{-10 * pi, 10 * pi}, {-2.0, 2.0}, {0.2, 3.0}};
    case SetFamily::two_balls: return {{0.3, 2.5}, {-10 * pi, 10 * pi}, {0.2, 1.5}, {0.2, 1.5}};
    case SetFamily::wedge: return {{-10 * pi, 10 * pi}, {0.15, 0.5 * pi - 0.15}, {-1.5, 1.5}};
  }
  return {};
}

inline std::vector<std::vector<double>> family_grid(SetFamily f) {
  const double pi = std::numbers::pi;
  std::vector<std::vector<double>> out;
  switch (f) {
    case SetFamily::tilted_halfspace:
      for (int k = 0; k < 12; ++k)
        for (double r : {-0.5, 0.5}) out.push_back({k * pi / 6.0, r});
      break;
    case SetFamily::strip:
      for (int k = 0; k < 6; ++k)
        for (double m : {0.0, 0.75})
          for (double wd : {0.5, 1.5}) out.push_back({k * pi / 6.0, m, wd});
      break;
    case SetFamily::two_balls:
      for (double d : {0.8, 1.5})
        for (int k = 0; k < 4; ++k)
          for (double r1 : {0.4, 0.8}) out.push_back({d, k * pi / 4.0, r1, 0.6});
      break;
    case SetFamily::wedge:
      for (int k = 0; k < 4; ++k)
        for (double phi : {pi / 6.0, pi / 3.0})
          for (double s : {-0.5, 0.5}) out.push_back({k * pi / 2.0 + pi / 8.0, phi, s});
      break;
  }
  return out;
}

}  // namespace detail

/// Member of a search family, placed relative to `center` (the density centre).
inline Region family_region(SetFamily f, const std::vector<double>& p, const std::vector<double>& center) {
  require(center.size() == 2, ErrorCode::unsupported, "set families are two-dimensional");
  const auto shift = [&](const std::vector<double>& u) { return dot(u, center); };
  switch (f) {
    case SetFamily::tilted_halfspace: {
      const auto u = detail::unit2(p[0]);
      return Region::half_space(u, p[1] + shift(u));
    }
    case SetFamily::strip: {
      const auto u = detail::unit2(p[0]);
      return Region::strip(u, p[1] - 0.5 * p[2] + shift(u), p[1] + 0.5 * p[2] + shift(u));
    }
    case SetFamily::two_balls: {
      const auto u = detail::unit2(p[1]);
      std::vector<double> a{center[0] + p[0] * u[0], center[1] + p[0] * u[1]};
      std::vector<double> b{center[0] - p[0] * u[0], center[1] - p[0] * u[1]};
      return Region::ball(a, p[2]) | Region::ball(b, p[3]);
    }
    case SetFamily::wedge: {
      const double turn = 0.5 * std::numbers::pi - p[1];
      const auto u = detail::unit2(p[0]);
      const auto n1 = detail::unit2(p[0] - turn), n2 = detail::unit2(p[0] + turn);
      std::vector<double> apex{center[0] + p[2] * u[0], center[1] + p[2] * u[1]};
      return Region::half_space(n1, dot(n1, apex)) & Region::half_space(n2, dot(n2, apex));
    }
  }
  fail(ErrorCode::invalid_input, "unknown set family");
}

struct SearchOptions {
  std::vector<SetFamily> families = {SetFamily::tilted_halfspace, SetFamily::strip, SetFamily::two_balls,
                                     SetFamily::wedge};
  int directions = 16;     // v angles 2 pi k / directions, offset by half a step
  int coarse_res = 128;
  int resolution = 256;    // refinement and first certification level; the second is twice this
  int subcell = 4;
  double margin_factor = 5.0;
  int refine_rounds = 3;
  int max_certify = 3;     // refined candidates per search
  PerimeterOptions perimeter;
};

struct MarginCheck {
  int resolution = 0;
  PerimeterMethod method = PerimeterMethod::bv_boundary;
  double per_E = 0.0, per_S = 0.0;
  double margin = 0.0;   // per_S - per_E
  double budget = 0.0;   // combined error budget
  bool passed = false;   // margin > margin_factor * budget
};

struct ViolationRecord {
  SetFamily family = SetFamily::tilted_halfspace;
  std::vector<double> params;
  std::vector<double> v;
  double per_E = 0.0, per_S = 0.0;
  double margin = 0.0, budget = 0.0;
  int resolution = 0;
  std::vector<MarginCheck> checks;  // certification runs
  bool certified = false;
  IndicatorSet set;                 // E at `resolution`

  double ratio() const { return budget > 0.0 ? margin / budget : 0.0; }
};

struct SearchReport {
  bool found = false;
  std::size_t evaluations = 0;
  std::size_t candidates_certified = 0;  // candidates that went through certification
  std::optional<ViolationRecord> best;   // certified record when found; otherwise the best refined candidate
};

namespace detail {

struct Trial {
  double margin = 0.0, budget = 0.0;
  double per_E = 0.0, per_S = 0.0;
  double ratio() const { return margin / budget; }
};

inline std::optional<Trial> margin_trial(const WeightedDensity& w, const IndicatorSet& E,
                                         const PerimeterEstimate& pe, std::span<const double> v,
                                         const PerimeterOptions& popts) {
  try {
    const auto S = symmetrize(w, E, v);
    const auto ps = perimeter_bv(w, S, popts);
    return Trial{ps.value - pe.value, ps.error_budget + pe.error_budget, pe.value, ps.value};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::no_boundary || e.code() == ErrorCode::resolution_insufficient) return std::nullopt;
    throw;
  }
}

}  // namespace detail

/// Symmetrizes `E` along `v` at resolution `res` and compares perimeters with
/// the given estimator.
inline MarginCheck margin_check(const WeightedDensity& w, const Region& region, std::span<const double> v, int res,
                                PerimeterMethod method, double factor, int subcell = 4,
                                const PerimeterOptions& popts = {}) {
  const auto E = rasterize(region, density_grid(w, res), subcell);
  const auto S = symmetrize(w, E, v);
  const auto per = [&](const IndicatorSet& X) {
    return method == PerimeterMethod::minkowski ? perimeter_minkowski(w, X, popts) : perimeter_bv(w, X, popts);
  };
  const auto pe = per(E), ps = per(S);
  MarginCheck c;
  c.resolution = res;
  c.method = method;
  c.per_E = pe.value;
  c.per_S = ps.value;
  c.margin = ps.value - pe.value;
  c.budget = ps.error_budget + pe.error_budget;
  c.passed = c.margin > factor * c.budget;
  return c;
}

/// Coarse grid over family parameters and directions, local refinement of the
/// best ratios margin / budget, then certification: the margin must exceed
/// margin_factor times the combined budget at `resolution` and at twice it,
/// under both the boundary and the Minkowski estimator.
inline SearchReport violation_search(const WeightedDensity& w, const SearchOptions& opts = {}) {
  require(w.dim() == 2, ErrorCode::unsupported, "violation search runs in two dimensions");
  require(opts.directions >= 1, ErrorCode::invalid_input, "search needs at least one direction");
  const auto center = w.center();
  const double pi = std::numbers::pi;
  SearchReport rep;

  struct Coarse {
    double ratio;
    SetFamily family;
    std::vector<double> params;
    double theta;
  };
  std::vector<Coarse> coarse;
  const auto gc = density_grid(w, opts.coarse_res);
  for (SetFamily fam : opts.families)
    for (const auto& p : detail::family_grid(fam)) {
      IndicatorSet E;
      PerimeterEstimate pe;
      try {
        E = rasterize(family_region(fam, p, center), gc, opts.subcell);
        pe = perimeter_bv(w, E, opts.perimeter);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::empty_region || e.code() == ErrorCode::no_boundary) continue;
        throw;
      }
      for (int k = 0; k < opts.directions; ++k) {
        const double theta = 2.0 * pi * (k + 0.5) / opts.directions;
        const auto v = detail::unit2(theta);
        ++rep.evaluations;
        if (auto t = detail::margin_trial(w, E, pe, v, opts.perimeter)) coarse.push_back({t->ratio(), fam, p, theta});
      }
    }
  // deterministic order: ratio, then enumeration order
  std::stable_sort(coarse.begin(), coarse.end(), [](const Coarse& a, const Coarse& b) { return a.ratio > b.ratio; });

  const auto g = density_grid(w, opts.resolution);
  const auto evaluate = [&](SetFamily fam, const std::vector<double>& p, double theta) -> std::optional<detail::Trial> {
    ++rep.evaluations;
    try {
      const auto E = rasterize(family_region(fam, p, center), g, opts.subcell);
      const auto pe = perimeter_bv(w, E, opts.perimeter);
      return detail::margin_trial(w, E, pe, detail::unit2(theta), opts.perimeter);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::empty_region || e.code() == ErrorCode::no_boundary) return std::nullopt;
      throw;
    }
  };

  std::optional<ViolationRecord> best_uncertified;
  const int tries = std::min<int>(opts.max_certify, static_cast<int>(coarse.size()));
  for (int c = 0; c < tries; ++c) {
    if (coarse[c].ratio <= 0.0 && c > 0) break;
    auto params = coarse[c].params;
    double theta = coarse[c].theta;
    const auto fam = coarse[c].family;
    auto cur = evaluate(fam, params, theta);
    if (!cur) continue;
    const auto bounds = detail::family_bounds(fam);
    std::vector<double> step(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) step[i] = 0.05 * (bounds[i].second - bounds[i].first);
    for (std::size_t i = 0; i < params.size(); ++i)
      if (bounds[i].second - bounds[i].first > 10.0) step[i] = pi / 24.0;  // angles
    double theta_step = pi / opts.directions;
    for (int round = 0; round < opts.refine_rounds; ++round) {
      for (std::size_t i = 0; i <= params.size(); ++i)
        for (int sgn : {1, -1}) {
          auto p2 = params;
          double t2 = theta;
          if (i < params.size())
            p2[i] = std::clamp(p2[i] + sgn * step[i], bounds[i].first, bounds[i].second);
          else
            t2 += sgn * theta_step;
          if (p2 == params && t2 == theta) continue;
          const auto t = evaluate(fam, p2, t2);
          if (t && t->ratio() > cur->ratio()) {
            cur = t;
            params = p2;
            theta = t2;
          }
        }
      for (double& s : step) s *= 0.5;
      theta_step *= 0.5;
    }

    ViolationRecord rec;
    rec.family = fam;
    rec.params = params;
    rec.v = detail::unit2(theta);
    rec.per_E = cur->per_E;
    rec.per_S = cur->per_S;
    rec.margin = cur->margin;
    rec.budget = cur->budget;
    rec.resolution = opts.resolution;
    const auto region = family_region(fam, params, center);
    rec.set = rasterize(region, g, opts.subcell);

    if (rec.margin > opts.margin_factor * rec.budget) {
      ++rep.candidates_certified;
      rec.certified = true;
      for (int res : {opts.resolution, 2 * opts.resolution})
        for (auto method : {PerimeterMethod::bv_boundary, PerimeterMethod::minkowski}) {
          MarginCheck chk;
          try {
            chk = margin_check(w, region, rec.v, res, method, opts.margin_factor, opts.subcell, opts.perimeter);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::nonconvergent) throw;
            chk.resolution = res;
            chk.method = method;
          }
          rec.checks.push_back(chk);
          rec.certified = rec.certified && chk.passed;
          if (!rec.certified) break;
        }
      if (rec.certified) {
        rep.found = true;
        rep.best = std::move(rec);
        return rep;
      }
    }
    if (!best_uncertified || rec.ratio() > best_uncertified->ratio()) best_uncertified = std::move(rec);
  }
  rep.best = std::move(best_uncertified);
  return rep;
}

}  // namespace ehrhard
