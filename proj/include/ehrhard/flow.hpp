#pragma once

// Hole-filling flow: repeated symmetrizations along directions that carry
// mass from E \ H toward H \ E, where H is the equal-mass half-space.

#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"

#include <chrono>
#include <ostream>

namespace ehrhard {

struct DirectionOptions {
  int block = 4;              // voxels per pooling block along each axis
  int max_candidates = 64;    // per side; at most max_candidates^2 pairs are scored
  double min_occupancy = 0.1; // voxels of E \ H (or H \ E) count from this excess on
  double min_alignment = 0.0; // required v.eta; 0 admits any direction into H
};

struct DirectionChoice {
  std::vector<double> eta;
  std::vector<double> x, y;  // mass centroids near the chosen source and sink
  double score = 0.0;
};

namespace detail {

struct Candidate {
  std::vector<double> centroid;
  double mass = 0.0;
};

/// Blocks of `block`^n voxels holding excess mass, ranked by mass.
inline std::vector<Candidate> pooled_candidates(const GridGeometry& g, const std::vector<double>& excess,
                                                const std::vector<char>& eligible, int block, int keep) {
  const int n = g.dim();
  std::array<int, 3> nb{1, 1, 1};
  for (int a = 0; a < n; ++a) nb[a] = (g.dims(a) + block - 1) / block;
  const std::size_t count = static_cast<std::size_t>(nb[0]) * nb[1] * nb[2];
  std::vector<Candidate> blocks(count);
  for (auto& b : blocks) b.centroid.assign(n, 0.0);
  double x[3];
  for (std::size_t lin = 0; lin < g.size(); ++lin) {
    if (!eligible[lin] || excess[lin] <= 0.0) continue;
    const auto idx = g.unravel(lin);
    std::size_t b = 0;
    for (int a = 0; a < 3; ++a) b = b * nb[a] + (a < n ? idx[a] / block : 0);
    g.center(lin, x);
    blocks[b].mass += excess[lin];
    for (int a = 0; a < n; ++a) blocks[b].centroid[a] += excess[lin] * x[a];
  }
  std::vector<Candidate> out;
  for (auto& b : blocks) {
    if (b.mass <= 0.0) continue;
    for (double& c : b.centroid) c /= b.mass;
    out.push_back(std::move(b));
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.mass > b.mass; });
  if (static_cast<int>(out.size()) > keep) out.resize(keep);
  return out;
}

/// Mass centroid of `excess` within `radius` of `c`.
inline std::vector<double> local_centroid(const GridGeometry& g, const std::vector<double>& excess,
                                          const std::vector<char>& eligible, const std::vector<double>& c,
                                          double radius) {
  const int n = g.dim();
  std::vector<double> acc(n, 0.0);
  double m = 0.0, x[3];
  for (std::size_t lin = 0; lin < g.size(); ++lin) {
    if (!eligible[lin] || excess[lin] <= 0.0) continue;
    g.center(lin, x);
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) d2 += (x[a] - c[a]) * (x[a] - c[a]);
    if (d2 > radius * radius) continue;
    m += excess[lin];
    for (int a = 0; a < n; ++a) acc[a] += excess[lin] * x[a];
  }
  if (m <= 0.0) return c;
  for (double& a : acc) a /= m;
  return acc;
}

}  // namespace detail

/// Candidate directions eta = (y - x)/|y - x| with x in {f >= eps} cap (E \ H)
/// and y in {f >= eps} cap (H \ E), ranked by m_x m_y / |y - x| over pooled
/// blocks, subject to v.eta > min_alignment (> 0). Each pair is replaced by the
/// mass centroids within half its distance. At most `count` directions are
/// returned, pairwise at least `min_angle` radians apart.
inline std::vector<DirectionChoice> rank_directions(const WeightedDensity& w, const IndicatorSet& E,
                                                    const IndicatorSet& H_grid, const HalfSpace& H, double eps,
                                                    double mass_tol, int count,
                                                    const DirectionOptions& opts = {},
                                                    double min_angle = 0.035) {
  const auto& g = E.geometry();
  require(g == H_grid.geometry(), ErrorCode::grid_mismatch, "set and half-space grids differ");
  const int n = g.dim();
  require(static_cast<int>(H.v.size()) == n, ErrorCode::invalid_input, "half-space dimension mismatch");
  const double sd = symm_diff_measure(w, E, H_grid);
  require(sd > 2.0 * mass_tol, ErrorCode::already_converged, "set already equals the half-space");

  const auto masses = w.voxel_masses(g);
  std::vector<double> out_excess(g.size()), in_deficit(g.size());
  std::vector<char> dense(g.size());
  parallel::for_each_index(g.size(), [&](std::size_t lin) {
    double x[3];
    g.center(lin, x);
    dense[lin] = w.eval(x) >= eps;
    const double d = E.occupancy()[lin] - H_grid.occupancy()[lin];
    out_excess[lin] = d >= opts.min_occupancy ? d * (*masses)[lin] : 0.0;
    in_deficit[lin] = -d >= opts.min_occupancy ? -d * (*masses)[lin] : 0.0;
  });
  const auto xs = detail::pooled_candidates(g, out_excess, dense, opts.block, opts.max_candidates);
  const auto ys = detail::pooled_candidates(g, in_deficit, dense, opts.block, opts.max_candidates);
  const double floor = std::max(opts.min_alignment, 1e-12);

  struct Pair {
    double score;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) {
      std::vector<double> d(n);
      for (int a = 0; a < n; ++a) d[a] = ys[j].centroid[a] - xs[i].centroid[a];
      const double len = norm(d);
      if (len <= 0.0 || dot(d, H.v) <= floor * len) continue;
      pairs.push_back({xs[i].mass * ys[j].mass / len, i, j});
    }
  require(!pairs.empty(), ErrorCode::no_density_pair, "no source/sink pair above the density threshold");
  // stable sort on score keeps index order among ties, so the ranking is deterministic
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.score > b.score; });

  std::vector<DirectionChoice> out;
  const double cos_min = std::cos(min_angle);
  auto is_new = [&](const std::vector<double>& eta) {
    for (const auto& o : out)
      if (dot(o.eta, eta) >= cos_min) return false;
    return true;
  };
  for (const auto& p : pairs) {
    if (static_cast<int>(out.size()) >= count) break;
    DirectionChoice c;
    c.score = p.score;
    c.x = xs[p.i].centroid;
    c.y = ys[p.j].centroid;
    std::vector<double> d(n);
    for (int a = 0; a < n; ++a) d[a] = c.y[a] - c.x[a];
    if (!is_new(normalized(d))) continue;
    const double radius = 0.5 * norm(d);
    const auto xr = detail::local_centroid(g, out_excess, dense, c.x, radius);
    const auto yr = detail::local_centroid(g, in_deficit, dense, c.y, radius);
    std::vector<double> dr(n);
    for (int a = 0; a < n; ++a) dr[a] = yr[a] - xr[a];
    if (norm(dr) > 0.0 && dot(dr, H.v) > floor * norm(dr)) {
      c.x = xr;
      c.y = yr;
      d = dr;
    }
    c.eta = normalized(d);
    if (is_new(c.eta)) out.push_back(std::move(c));
  }
  return out;
}

/// The highest-ranked direction of rank_directions.
inline DirectionChoice pick_direction(const WeightedDensity& w, const IndicatorSet& E,
                                      const IndicatorSet& H_grid, const HalfSpace& H, double eps,
                                      double mass_tol, const DirectionOptions& opts = {}) {
  return rank_directions(w, E, H_grid, H, eps, mass_tol, 1, opts).front();
}

enum class FlowStatus { converged, budget_exhausted, stalled };

inline const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::converged: return "converged";
    case FlowStatus::budget_exhausted: return "budget_exhausted";
    case FlowStatus::stalled: return "stalled";
  }
  return "unknown";
}

struct FlowStep {
  int step = 0;
  std::vector<double> eta;
  double symm_diff = 0.0;       // mu(F_k delta H) after the step
  double outside = 0.0;         // mu(F_k \ H) after the step, voxel level
  double fiber_before = 0.0;    // fiber-wise mu(F_{k-1} \ H)
  double fiber_after = 0.0;     // fiber-wise mu(F_k \ H)
  double mass = 0.0;            // mu(F_k)
  double perimeter = 0.0;
  double perimeter_budget = 0.0;
  double eps = 0.0;
  double seconds = 0.0;
};

struct FlowOptions {
  int max_steps = 60;
  /// Stop when mu(F delta H) <= target. Negative: target_fraction of the
  /// initial value.
  double target = -1.0;
  double target_fraction = 0.05;
  /// Density threshold for direction selection; negative: 1% of max f on the grid.
  double eps = -1.0;
  /// Ranked directions tried per step; the one leaving the smallest
  /// mu(F delta H) is kept. 1 follows the top-ranked pair only.
  int lookahead = 4;
  /// Also try eta = v itself each step.
  bool try_normal = true;
  int stall_steps = 3;
  /// Consecutive steps without a decrease of mass_tol before giving up.
  int max_idle_steps = 12;
  int max_halvings = 30;
  bool track_perimeter = true;
  DirectionOptions direction;
  PerimeterOptions perimeter;
};

struct FlowTrace {
  HalfSpace target;
  double initial_symm_diff = 0.0;
  double initial_outside = 0.0;
  double initial_perimeter = 0.0;
  double initial_perimeter_budget = 0.0;
  double target_symm_diff = 0.0;
  double mass_tol = 0.0;
  std::vector<FlowStep> steps;
  FlowStatus status = FlowStatus::budget_exhausted;
  IndicatorSet final_set;

  /// Largest fiber-wise increase of mu(F \ H) over all steps (<= 0 when the
  /// monotonicity holds exactly).
  double worst_fiber_increase() const {
    double worst = -kInf;
    for (const auto& s : steps) worst = std::max(worst, s.fiber_after - s.fiber_before);
    return steps.empty() ? 0.0 : worst;
  }
  /// Largest step-to-step increase of the voxel-level mu(F \ H).
  double worst_grid_increase() const {
    double worst = -kInf, prev = initial_outside;
    for (const auto& s : steps) {
      worst = std::max(worst, s.outside - prev);
      prev = s.outside;
    }
    return steps.empty() ? 0.0 : worst;
  }

  void write_csv(std::ostream& os) const {
    os << "step,eta,symm_diff,outside,fiber_before,fiber_after,mass,perimeter,perimeter_budget,eps,seconds\n";
    os.precision(12);
    for (const auto& s : steps) {
      os << s.step << ",\"";
      for (std::size_t i = 0; i < s.eta.size(); ++i) os << (i ? " " : "") << s.eta[i];
      os << "\"," << s.symm_diff << ',' << s.outside << ',' << s.fiber_before << ',' << s.fiber_after << ','
         << s.mass << ',' << s.perimeter << ',' << s.perimeter_budget << ',' << s.eps << ',' << s.seconds
         << '\n';
    }
  }
};

/// Iterates F_{k+1} = S_{eta_k}(F_k) toward H = H_mu(E, v).
inline FlowTrace flow_to_halfspace(const WeightedDensity& w, const IndicatorSet& E, std::span<const double> v,
                                   const FlowOptions& opts = {}) {
  const auto& g = E.geometry();
  FlowTrace trace;
  trace.mass_tol = 1e-6 * std::max(w.total(), 1e-300);
  trace.target = half_space_equal_measure(w, E, v);
  const auto H_grid = rasterize(Region::half_space(trace.target.v, trace.target.r), g,
                                E.subcell());
  IndicatorSet F = E;
  trace.initial_symm_diff = symm_diff_measure(w, F, H_grid);
  trace.initial_outside = difference_measure(w, F, H_grid);
  trace.target_symm_diff = opts.target >= 0.0 ? opts.target : opts.target_fraction * trace.initial_symm_diff;
  if (opts.track_perimeter) {
    try {
      const auto p = perimeter_bv(w, F, opts.perimeter);
      trace.initial_perimeter = p.value;
      trace.initial_perimeter_budget = p.error_budget;
    } catch (const Error&) {
    }
  }

  double eps = opts.eps;
  if (eps < 0.0) {
    double fmax = 0.0, x[3];
    for (std::size_t lin = 0; lin < g.size(); ++lin) {
      g.center(lin, x);
      fmax = std::max(fmax, w.eval(x));
    }
    eps = 0.01 * fmax;
  }

  double sd = trace.initial_symm_diff;
  int stalls = 0, idle = 0, halvings = 0;
  trace.status = FlowStatus::budget_exhausted;
  if (sd <= std::max(trace.target_symm_diff, 2.0 * trace.mass_tol)) {
    trace.status = FlowStatus::converged;
    trace.final_set = F;
    return trace;
  }
  for (int k = 1; k <= opts.max_steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<DirectionChoice> dirs;
    try {
      dirs = rank_directions(w, F, H_grid, trace.target, eps, trace.mass_tol, std::max(opts.lookahead, 1),
                             opts.direction);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::already_converged) {
        trace.status = FlowStatus::converged;
        break;
      }
      if (e.code() != ErrorCode::no_density_pair) throw;
      if (!opts.try_normal) {
        if (halvings >= opts.max_halvings) {
          trace.status = FlowStatus::stalled;
          break;
        }
        eps *= 0.5;
        ++halvings;
        --k;
        continue;
      }
    }
    if (opts.try_normal) {
      DirectionChoice normal;
      normal.eta = trace.target.v;
      bool close = false;
      for (const auto& d : dirs) close = close || dot(d.eta, normal.eta) >= std::cos(0.035);
      if (!close) dirs.push_back(std::move(normal));
    }
    SymmetrizeOptions so;
    so.transfer_target = trace.target;
    std::optional<SymmetrizeResult> best;
    std::vector<double> best_eta;
    double best_sd = kInf;
    for (const auto& d : dirs) {
      auto r = symmetrize_detailed(w, F, d.eta, so);
      const double s = symm_diff_measure(w, r.set, H_grid);
      if (s < best_sd) {
        best_sd = s;
        best = std::move(r);
        best_eta = d.eta;
      }
    }
    auto& res = *best;
    F = std::move(res.set);

    FlowStep st;
    st.step = k;
    st.eta = best_eta;
    st.symm_diff = best_sd;
    st.outside = difference_measure(w, F, H_grid);
    st.fiber_before = res.transfer->before;
    st.fiber_after = res.transfer->after;
    st.mass = res.mass_after;
    st.eps = eps;
    if (opts.track_perimeter) {
      try {
        const auto p = perimeter_bv(w, F, opts.perimeter);
        st.perimeter = p.value;
        st.perimeter_budget = p.error_budget;
      } catch (const Error&) {
      }
    }
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double decrease = sd - st.symm_diff;
    sd = st.symm_diff;
    trace.steps.push_back(std::move(st));

    if (sd <= trace.target_symm_diff) {
      trace.status = FlowStatus::converged;
      break;
    }
    stalls = decrease < trace.mass_tol ? stalls + 1 : 0;
    idle = decrease < trace.mass_tol ? idle + 1 : 0;
    if (stalls >= opts.stall_steps) {
      if (halvings >= opts.max_halvings || idle >= opts.max_idle_steps) {
        trace.status = FlowStatus::stalled;
        break;
      }
      eps *= 0.5;
      ++halvings;
      stalls = 0;
    }
  }
  trace.final_set = std::move(F);
  return trace;
}

}  // namespace ehrhard
