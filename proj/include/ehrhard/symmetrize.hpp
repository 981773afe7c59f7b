#pragma once

// Generalized Ehrhard symmetrization. Each fiber of E along v is replaced by
// the largest half-line {x.v >= c} of equal fiber mass. Internally the result
// is a subgraph {x.u <= h(z)} with u = -v and h = -c.

#include "ehrhard/sets.hpp"

namespace ehrhard {

struct SymmetrizeOptions {
  double delta = 0.0;         // regularization added to each fiber mass
  int fiber_oversample = 0;   // samples per voxel along and across fibers; 0 = E.subcell()
  double mass_tol_rel = 1e-6; // allowed |mu(S) - mu(E)| relative to mu(R^n)
  /// When set, fiber-wise masses of E \ H and S \ H are recorded.
  std::optional<HalfSpace> transfer_target;
};

/// Fiber-wise mu(E \ H) before and mu(S \ H) after one symmetrization, both
/// evaluated with the same per-fiber cell convention.
struct TransferCheck {
  double before = 0.0;
  double after = 0.0;
};

struct SymmetrizeResult {
  IndicatorSet set;
  HeightField height;
  double mass_before = 0.0;
  double mass_after = 0.0;
  double shift = 0.0;  // common height shift applied by the mass correction
  bool axis_path = false;
  std::optional<TransferCheck> transfer;
};

namespace detail {

/// Axis index k when the frame's fiber is +-e_k and the remaining columns are
/// the other standard basis vectors in increasing order.
inline std::optional<int> grid_axis(const Frame& fr) {
  const int n = fr.dim();
  int k = -1;
  for (int i = 0; i < n; ++i)
    if (std::abs(std::abs(fr.fiber()[i]) - 1.0) <= 1e-15) k = i;
  if (k < 0) return std::nullopt;
  for (int j = 0, expect = 0; j < n; ++j) {
    if (j == fr.axis()) continue;
    if (expect == k) ++expect;
    for (int i = 0; i < n; ++i)
      if (fr.e(j)[i] != (i == expect ? 1.0 : 0.0)) return std::nullopt;
    ++expect;
  }
  return k;
}

/// Fraction of the up-interval [a, b] lying outside H, given that outside H
/// on this line means {s > s_h} (dir < 0), {s < s_h} (dir > 0), or all/none
/// (dir == 0, encoded by s_h = -inf / +inf).
inline double outside_fraction(double a, double b, double s_h, int dir) {
  if (dir < 0) return b <= s_h ? 0.0 : (a >= s_h ? 1.0 : (b - s_h) / (b - a));
  if (dir > 0) return a >= s_h ? 0.0 : (b <= s_h ? 1.0 : (s_h - a) / (b - a));
  return s_h == -kInf ? 1.0 : 0.0;
}

struct LineOutside {
  double s_h = 0.0;
  int dir = 0;
};

/// Part of the line o + s u outside H, in the up coordinate s.
inline LineOutside line_outside(const HalfSpace& H, std::span<const double> o,
                                std::span<const double> u) {
  const double alpha = dot(u, H.v);
  const double base = dot(o, H.v);
  if (std::abs(alpha) < 1e-14) return {base < H.r ? -kInf : kInf, 0};
  return {(H.r - base) / alpha, alpha < 0.0 ? -1 : 1};
}

inline double point_outside(const LineOutside& side, double s) {
  if (side.dir < 0) return s > side.s_h ? 1.0 : 0.0;
  if (side.dir > 0) return s < side.s_h ? 1.0 : 0.0;
  return side.s_h == -kInf ? 1.0 : 0.0;
}

struct ColumnPass {
  HeightField height;
  std::vector<double> occ;
  TransferCheck transfer;
};

/// Symmetrization along grid axis k using exact voxel masses.
inline ColumnPass column_pass(const WeightedDensity& w, const IndicatorSet& E, const Frame& frame,
                              int k, double delta, const HalfSpace* target) {
  const auto& g = E.geometry();
  const int n = g.dim();
  const int sigma = frame.fiber()[k] > 0.0 ? 1 : -1;
  const auto masses = w.voxel_masses(g);
  const auto [below, above] = w.column_tails(g, k);
  const auto factors = w.separable_factors();
  const bool separable = factors && !std::holds_alternative<UniformWeight>(w.kind()) && !w.is_zero();
  const bool positive = w.positive_everywhere();

  std::vector<double> lo, hi;
  std::vector<int> dims;
  double area = 1.0;
  for (int i = 0; i < n; ++i) {
    if (i == k) continue;
    lo.push_back(g.box().lo[i]);
    hi.push_back(g.box().hi[i]);
    dims.push_back(g.dims(i));
    area *= g.spacing(i);
  }
  ColumnPass out{HeightField::over(frame, lo, hi, dims), std::vector<double>(g.size(), 0.0), {}};

  // Column starts (axis-k index 0), in HeightField order.
  std::vector<std::size_t> starts;
  for (std::size_t lin = 0; lin < g.size(); ++lin)
    if (g.unravel(lin)[k] == 0) starts.push_back(lin);

  const int N = g.dims(k);
  const std::size_t stride = g.stride(k);
  const double hk = g.spacing(k);
  const double lo_k = g.box().lo[k];
  std::vector<double> before(starts.size(), 0.0), after(starts.size(), 0.0);

  parallel::for_each_index(starts.size(), [&](std::size_t c) {
    const std::size_t lin0 = starts[c];
    auto idx = g.unravel(lin0);
    double x[3];
    for (int i = 0; i < n; ++i) x[i] = g.center(i, idx[i]);
    // cross-section mass for in-voxel and tail inversion
    double cross = 1.0;
    if (separable)
      for (int i = 0; i < n; ++i)
        if (i != k) {
          const double a = g.box().lo[i] + idx[i] * g.spacing(i);
          cross *= (*factors)[i].mass(a, a + g.spacing(i));
        }
    const auto& fk = separable ? (*factors)[k] : Density1D();

    // Fill order: increasing up-coordinate s = sigma * x_k.
    const auto voxel = [&](int j) { return lin0 + static_cast<std::size_t>(sigma > 0 ? j : N - 1 - j) * stride; };
    const double t_start = sigma > 0 ? below[lin0] : above[lin0];
    const double t_end = sigma > 0 ? above[lin0] : below[lin0];
    x[k] = lo_k - 0.5 * hk;
    const bool in_below = E.tail().contains(x);
    x[k] = g.box().hi[k] + 0.5 * hk;
    const bool in_above = E.tail().contains(x);
    const bool in_start = sigma > 0 ? in_below : in_above;
    const bool in_end = sigma > 0 ? in_above : in_below;

    double mE = in_start ? t_start : 0.0, mfull = t_start;
    for (int j = 0; j < N; ++j) {
      const std::size_t v = voxel(j);
      mE += E.occupancy()[v] * (*masses)[v];
      mfull += (*masses)[v];
    }
    if (in_end) mE += t_end;
    mfull += t_end;
    const double m = std::min(mE + delta * area, mfull);

    // up-coordinate range of voxel j in fill order
    const auto s_lo = [&](int j) {
      return sigma > 0 ? lo_k + j * hk : -(lo_k + (N - j) * hk);
    };

    double h;
    double start_frac = 0.0, end_frac = 0.0;  // fraction of each tail in S
    if (m >= mfull * (1.0 - 1e-13)) {
      for (int j = 0; j < N; ++j) out.occ[voxel(j)] = 1.0;
      h = kInf;
      start_frac = end_frac = 1.0;
    } else if (m <= 0.0 && positive) {
      h = -kInf;
    } else if (m < t_start) {
      // top lies in the starting tail
      const double p = m / cross;
      h = sigma > 0 ? fk.quantile(std::min(p, fk.total())) : -fk.upper_quantile(p);
      start_frac = t_start > 0.0 ? m / t_start : 0.0;
    } else {
      double r = m - t_start;
      start_frac = 1.0;
      h = kInf;
      int j = 0;
      for (; j < N; ++j) {
        const std::size_t v = voxel(j);
        const double mv = (*masses)[v];
        if (mv <= r) {
          out.occ[v] = 1.0;
          r -= mv;
          continue;
        }
        out.occ[v] = clamp01(r / mv);
        const double a = s_lo(j);
        if (separable && mv > 0.0) {
          // position q in [a, a + hk] with mass r / cross below it
          const double target = r / cross;
          h = bisect_first_true(a, a + hk, [&](double q) {
            const double got = sigma > 0 ? fk.mass(a, q) : fk.mass(-q, -a);
            return got >= target;
          }, 80);
        } else {
          h = a + hk * (r / mv);
        }
        r = 0.0;
        break;
      }
      if (j == N) {
        // top lies in the ending tail
        if (t_end <= r || t_end == 0.0) {
          h = kInf;
          end_frac = 1.0;
        } else {
          const double q = (t_end - r) / cross;
          h = sigma > 0 ? fk.upper_quantile(q) : -fk.quantile(std::min(q, fk.total()));
          end_frac = r / t_end;
        }
      }
    }
    out.height.values[c] = h;

    if (target) {
      std::vector<double> o(x, x + n), u(n, 0.0);
      o[k] = 0.0;
      u[k] = sigma;
      const auto side = line_outside(*target, o, u);
      const double top = s_lo(N - 1) + hk;
      const double w_start = point_outside(side, s_lo(0) - 0.5 * hk);
      const double w_end = point_outside(side, top + 0.5 * hk);
      double b = (in_start ? t_start : 0.0) * w_start + (in_end ? t_end : 0.0) * w_end;
      double a = t_start * start_frac * w_start + t_end * end_frac * w_end;
      for (int j = 0; j < N; ++j) {
        const std::size_t v = voxel(j);
        const double fr = outside_fraction(s_lo(j), s_lo(j) + hk, side.s_h, side.dir);
        b += E.occupancy()[v] * (*masses)[v] * fr;
        a += out.occ[v] * (*masses)[v] * fr;
      }
      before[c] = b;
      after[c] = a;
    }
  });
  if (target) out.transfer = {pairwise_sum(before), pairwise_sum(after)};
  return out;
}

struct FiberPass {
  HeightField height;
  TransferCheck transfer;
};

/// Symmetrization along an arbitrary fiber direction by sampling lines.
inline FiberPass fiber_pass(const WeightedDensity& w, const IndicatorSet& E, const Frame& frame,
                            double delta, int oversample, const HalfSpace* target) {
  const auto& g = E.geometry();
  const int n = g.dim();
  const auto u = frame.fiber();
  const double step = g.min_spacing() / oversample;
  std::vector<double> lo, hi;
  std::vector<int> dims;
  for (int j = 0; j < n; ++j) {
    if (j == frame.axis()) continue;
    double a = 0.0, b = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = frame.e(j)[i];
      a += std::min(e * g.box().lo[i], e * g.box().hi[i]);
      b += std::max(e * g.box().lo[i], e * g.box().hi[i]);
    }
    const int cells = std::max(1, static_cast<int>(std::ceil((b - a) / step - 1e-9)));
    lo.push_back(a);
    hi.push_back(a + cells * step);
    dims.push_back(cells);
  }
  FiberPass out{HeightField::over(frame, lo, hi, dims), {}};
  const bool positive = w.positive_everywhere();
  const auto& occ = E.occupancy();
  std::vector<double> before(out.height.size(), 0.0), after(out.height.size(), 0.0);
  const double base_cell = n == 1 ? 1.0 : std::pow(step, n - 1);

  parallel::for_each_index(out.height.size(), [&](std::size_t c) {
    const auto z = out.height.cell_center(c);
    const auto o = frame.base_point(z);
    const auto [t0, t1] = chord(g.box(), o, u);
    if (!(t0 < t1)) {
      out.height.values[c] = E.tail().contains(o.data()) ? kInf : -kInf;
      return;
    }
    const auto L = w.line(o, u);
    const int K = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step)));
    const double dt = (t1 - t0) / K;
    double x[3];
    const auto point = [&](double t) {
      for (int i = 0; i < n; ++i) x[i] = o[i] + t * u[i];
      return x;
    };
    const bool in_lo = E.tail().contains(point(t0 - dt));
    const bool in_hi = E.tail().contains(point(t1 + dt));
    const double T_lo = L.cdf(t0), T_hi = L.upper(t1);
    const bool closed = L.closed_form();

    // Cell masses: exact CDF differences on closed-form lines (only where E
    // is present), midpoint rule otherwise.
    std::vector<double> ok(K), q(K, 0.0);
    for (int k = 0; k < K; ++k) ok[k] = g.interpolate(occ, point(t0 + (k + 0.5) * dt));
    double mE_in = 0.0, mfull;
    if (closed) {
      double prev_edge = kInf;  // cached cdf at the lower edge of cell k
      for (int k = 0; k < K; ++k) {
        if (ok[k] <= 0.0) {
          prev_edge = kInf;
          continue;
        }
        const double a = prev_edge == kInf ? L.cdf(t0 + k * dt) : prev_edge;
        const double b = L.cdf(t0 + (k + 1) * dt);
        prev_edge = b;
        q[k] = std::max(0.0, b - a);
        mE_in += ok[k] * q[k];
      }
      mfull = L.total();
    } else {
      double s = 0.0;
      for (int k = 0; k < K; ++k) {
        q[k] = L.eval(t0 + (k + 0.5) * dt) * dt;
        s += q[k];
        mE_in += ok[k] * q[k];
      }
      mfull = T_lo + s + T_hi;
    }
    const double mE = (in_lo ? T_lo : 0.0) + mE_in + (in_hi ? T_hi : 0.0);
    const double m = std::min(mE + delta, mfull);

    double h;
    std::vector<double> os;  // S occupancy per cell (numeric lines)
    if (m >= mfull * (1.0 - 1e-13)) {
      h = kInf;
    } else if (closed) {
      h = L.quantile_lower(m);
    } else {
      os.assign(K, 0.0);
      if (m <= 0.0 && positive) {
        h = -kInf;
      } else if (m < T_lo) {
        h = L.quantile_lower(m);
      } else {
        double r = m - T_lo;
        h = t1;
        int k = 0;
        for (; k < K; ++k) {
          if (q[k] <= r) {
            os[k] = 1.0;
            r -= q[k];
            continue;
          }
          os[k] = clamp01(r / q[k]);
          h = t0 + (k + os[k]) * dt;
          break;
        }
        if (k == K) h = r >= T_hi ? kInf : L.quantile_lower(m);
      }
    }
    out.height.values[c] = h;

    if (target) {
      const auto side = line_outside(*target, o, u);
      // mass of [a, b] outside H along this line
      const auto out_mass = [&](double a, double b) {
        if (closed) {
          if (side.dir < 0) {
            const double l = std::max(a, side.s_h);
            return l < b ? L.cdf(b) - L.cdf(l) : 0.0;
          }
          if (side.dir > 0) {
            const double r = std::min(b, side.s_h);
            return a < r ? L.cdf(r) - L.cdf(a) : 0.0;
          }
          return side.s_h == -kInf ? L.cdf(b) - L.cdf(a) : 0.0;
        }
        return 0.0;
      };
      const double w_lo = point_outside(side, t0 - 0.5 * dt);
      const double w_hi = point_outside(side, t1 + 0.5 * dt);
      double b = 0.0, a = 0.0;
      if (closed) {
        b = (in_lo ? out_mass(-kInf, t0) : 0.0) + (in_hi ? out_mass(t1, kInf) : 0.0);
        for (int k = 0; k < K; ++k)
          if (ok[k] > 0.0) b += ok[k] * out_mass(t0 + k * dt, t0 + (k + 1) * dt);
        a = out_mass(-kInf, h);
      } else {
        b = (in_lo ? T_lo * w_lo : 0.0) + (in_hi ? T_hi * w_hi : 0.0);
        const bool full = h == kInf;
        a = full ? T_lo * w_lo + T_hi * w_hi : std::min(m, T_lo) * w_lo;
        for (int k = 0; k < K; ++k) {
          const double fr = outside_fraction(t0 + k * dt, t0 + (k + 1) * dt, side.s_h, side.dir);
          b += ok[k] * q[k] * fr;
          a += (full ? 1.0 : (os.empty() ? 0.0 : os[k])) * q[k] * fr;
        }
      }
      before[c] = b * base_cell;
      after[c] = a * base_cell;
    }
  });
  if (target) out.transfer = {pairwise_sum(before), pairwise_sum(after)};
  return out;
}

/// Rasterizes {x.u <= h(z) + shift} with s^n subcells and a linear ramp of
/// one subcell width; the shift is chosen so the voxel mass equals
/// target_mass (within one subcell of shift).
struct RasterResult {
  std::vector<double> occ;
  double shift = 0.0;
};

inline RasterResult rasterize_heights(const HeightField& hf, const GridGeometry& g,
                                      const std::vector<double>& masses, int s,
                                      std::optional<double> target_mass) {
  const int n = g.dim();
  const auto u = hf.up();
  const double sub = g.min_spacing() / s;
  double ramp = 0.0;
  for (int i = 0; i < n; ++i) ramp += sub * std::abs(u[i]);
  const double max_shift = target_mass ? sub : 0.0;
  const double band = 0.5 * ramp + max_shift;
  const int samples = static_cast<int>(std::lround(std::pow(s, n)));
  std::vector<double> occ(g.size(), 0.0);
  std::vector<char> boundary(g.size(), 0);

  std::vector<int> base_axes;
  for (int j = 0; j < n; ++j)
    if (j != hf.frame.axis()) base_axes.push_back(j);

  const auto sample_d = [&](std::size_t lin, int sidx) {
    const auto idx = g.unravel(lin);
    double x[3], z[2];
    int rem = sidx;
    for (int a = n - 1; a >= 0; --a) {
      x[a] = g.box().lo[a] + (idx[a] + (rem % s + 0.5) / s) * g.spacing(a);
      rem /= s;
    }
    const std::span<const double> xs(x, static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < base_axes.size(); ++j) z[j] = dot(xs, hf.frame.e(base_axes[j]));
    return hf.interpolate(z) - dot(xs, u);
  };
  const auto frac = [&](double d) {
    if (d == kInf) return 1.0;
    if (d == -kInf) return 0.0;
    return clamp01(0.5 + d / ramp);
  };

  // Half-extents of a voxel's projection onto each base axis and onto up.
  std::vector<double> base_half(base_axes.size(), 0.0);
  double up_half = 0.0;
  for (int i = 0; i < n; ++i) {
    up_half += 0.5 * g.spacing(i) * std::abs(u[i]);
    for (std::size_t j = 0; j < base_axes.size(); ++j)
      base_half[j] += 0.5 * g.spacing(i) * std::abs(hf.frame.e(base_axes[j])[i]);
  }

  parallel::for_each_index(g.size(), [&](std::size_t lin) {
    double x[3], zl[2], zh[2];
    g.center(lin, x);
    const std::span<const double> xs(x, static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < base_axes.size(); ++j) {
      const double zc = dot(xs, hf.frame.e(base_axes[j]));
      zl[j] = zc - base_half[j];
      zh[j] = zc + base_half[j];
    }
    const double sc = dot(xs, u);
    const auto [hmin, hmax] = hf.range(zl, zh);
    if (hmin - (sc + up_half) >= band) {
      occ[lin] = 1.0;
      return;
    }
    if (hmax - (sc - up_half) <= -band) return;
    double acc = 0.0;
    bool near = false;
    for (int k = 0; k < samples; ++k) {
      const double d = sample_d(lin, k);
      if (std::isfinite(d) && std::abs(d) < band) near = true;
      acc += frac(d);
    }
    occ[lin] = acc / samples;
    boundary[lin] = near;
  });
  RasterResult out{std::move(occ), 0.0};
  if (!target_mass) return out;

  std::vector<std::size_t> bidx;
  for (std::size_t lin = 0; lin < g.size(); ++lin)
    if (boundary[lin]) bidx.push_back(lin);
  std::vector<double> d(bidx.size() * samples);
  parallel::for_each_index(bidx.size(), [&](std::size_t b) {
    for (int k = 0; k < samples; ++k) d[b * samples + k] = sample_d(bidx[b], k);
  });
  std::vector<double> fixed_terms(g.size(), 0.0);
  for (std::size_t lin = 0; lin < g.size(); ++lin)
    if (!boundary[lin]) fixed_terms[lin] = out.occ[lin] * masses[lin];
  const double fixed = pairwise_sum(fixed_terms);
  const auto boundary_occ = [&](std::size_t b, double shift) {
    double acc = 0.0;
    for (int k = 0; k < samples; ++k) acc += frac(d[b * samples + k] + shift);
    return acc / samples;
  };
  std::vector<double> terms(bidx.size());
  const auto mass_at = [&](double shift) {
    for (std::size_t b = 0; b < bidx.size(); ++b) terms[b] = boundary_occ(b, shift) * masses[bidx[b]];
    return fixed + pairwise_sum(terms);
  };
  double lo = -max_shift, hi = max_shift;
  double shift;
  if (mass_at(lo) >= *target_mass) {
    shift = lo;
  } else if (mass_at(hi) <= *target_mass) {
    shift = hi;
  } else {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mass_at(mid) < *target_mass)
        lo = mid;
      else
        hi = mid;
    }
    shift = 0.5 * (lo + hi);
  }
  for (std::size_t b = 0; b < bidx.size(); ++b) out.occ[bidx[b]] = boundary_occ(b, shift);
  out.shift = shift;
  return out;
}

inline int oversample_for(const IndicatorSet& E, const SymmetrizeOptions& opts) {
  return opts.fiber_oversample > 0 ? opts.fiber_oversample : E.subcell();
}

}  // namespace detail

/// m_E(f, xp): mu-mass of E on the fiber through base point xp, by
/// occupancy-weighted quadrature at sub-voxel spacing plus the tails.
inline double marginal_slice(const WeightedDensity& w, const Frame& frame, const IndicatorSet& E,
                             std::span<const double> xp) {
  const auto o = frame.base_point(xp);
  const auto u = frame.fiber();
  const auto L = w.line(o, u);
  const auto& g = E.geometry();
  const int n = g.dim();
  const auto [t0, t1] = chord(g.box(), o, u);
  if (!(t0 < t1)) return E.tail().contains(o.data()) ? L.total() : 0.0;
  const double step = g.min_spacing() / (2 * E.subcell());
  const int K = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step)));
  const double dt = (t1 - t0) / K;
  double x[3];
  const auto point = [&](double t) {
    for (int i = 0; i < n; ++i) x[i] = o[i] + t * u[i];
    return x;
  };
  std::vector<double> terms(K);
  for (int k = 0; k < K; ++k) {
    const double o_k = g.interpolate(E.occupancy(), point(t0 + (k + 0.5) * dt));
    if (o_k <= 0.0) continue;
    terms[k] = o_k * (L.closed_form() ? L.cdf(t0 + (k + 1) * dt) - L.cdf(t0 + k * dt)
                                      : L.eval(t0 + (k + 0.5) * dt) * dt);
  }
  double m = pairwise_sum(terms);
  if (E.tail().contains(point(t0 - dt))) m += L.cdf(t0);
  if (E.tail().contains(point(t1 + dt))) m += L.upper(t1);
  return m;
}

/// Height field of S_{-u}(E), u the frame's fiber axis: per fiber the largest
/// h with mass min(m_E + delta, m_full) on {s <= h}.
inline HeightField height_function(const WeightedDensity& w, const Frame& frame,
                                   const IndicatorSet& E, double delta = 0.0, int oversample = 0) {
  require(delta >= 0.0, ErrorCode::invalid_input, "delta must be non-negative");
  require(frame.dim() == E.dim(), ErrorCode::invalid_input, "frame dimension mismatch");
  if (auto k = detail::grid_axis(frame))
    return detail::column_pass(w, E, frame, *k, delta, nullptr).height;
  require(E.dim() >= 2, ErrorCode::invalid_input, "1D fibers must be axis-aligned");
  return detail::fiber_pass(w, E, frame, delta, oversample > 0 ? oversample : E.subcell(), nullptr)
      .height;
}

inline SymmetrizeResult symmetrize_detailed(const WeightedDensity& w, const IndicatorSet& E,
                                            std::span<const double> v_in,
                                            const SymmetrizeOptions& opts = {}) {
  require(static_cast<int>(v_in.size()) == E.dim(), ErrorCode::invalid_input,
          "direction dimension mismatch");
  require(std::abs(norm(v_in) - 1.0) <= 1e-9, ErrorCode::invalid_input, "direction must be a unit vector");
  const auto v = normalized(v_in);
  std::vector<double> up(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) up[i] = -v[i];
  const Frame frame = Frame::along(up);
  const auto& g = E.geometry();
  const HalfSpace* target = opts.transfer_target ? &*opts.transfer_target : nullptr;

  SymmetrizeResult res;
  res.mass_before = mu_measure(w, E);
  const double tot = w.total();
  const double mass_tol = opts.mass_tol_rel * std::max(tot, 1e-300);

  TailConvention tail;
  if (res.mass_before <= 0.0 && w.positive_everywhere()) {
    tail = TailConvention::empty();
  } else if (res.mass_before >= tot * (1.0 - 1e-12)) {
    tail = TailConvention::full();
  } else {
    const auto H = half_space_with_mass(w, v, std::min(res.mass_before, tot));
    tail = TailConvention::halfspace(H.v, H.r);
  }

  std::vector<double> occ;
  if (auto k = detail::grid_axis(frame)) {
    auto pass = detail::column_pass(w, E, frame, *k, opts.delta, target);
    res.height = std::move(pass.height);
    occ = std::move(pass.occ);
    res.axis_path = true;
    if (target) res.transfer = pass.transfer;
  } else {
    require(E.dim() >= 2, ErrorCode::invalid_input, "1D symmetrization directions are +-1");
    auto pass = detail::fiber_pass(w, E, frame, opts.delta, detail::oversample_for(E, opts), target);
    res.height = std::move(pass.height);
    if (target) res.transfer = pass.transfer;
    const auto masses = w.voxel_masses(g);
    IndicatorSet probe(g, std::vector<double>(g.size(), 0.0), E.subcell(), tail);
    std::optional<double> goal;
    if (opts.delta == 0.0) goal = res.mass_before - tail_mass(w, probe);
    auto raster = detail::rasterize_heights(res.height, g, *masses, E.subcell(), goal);
    occ = std::move(raster.occ);
    res.shift = raster.shift;
    if (raster.shift != 0.0)
      for (double& h : res.height.values)
        if (std::isfinite(h)) h += raster.shift;
  }
  res.set = IndicatorSet(g, std::move(occ), E.subcell(), tail);
  res.mass_after = mu_measure(w, res.set);
  if (opts.delta == 0.0)
    require(std::abs(res.mass_after - res.mass_before) <= mass_tol, ErrorCode::resolution_insufficient,
            "symmetrized mass differs from the input by more than mass_tol");
  return res;
}

/// S_v(E).
inline IndicatorSet symmetrize(const WeightedDensity& w, const IndicatorSet& E,
                               std::span<const double> v) {
  return symmetrize_detailed(w, E, v).set;
}

}  // namespace ehrhard
