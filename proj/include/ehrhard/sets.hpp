#pragma once

// Sets as fractional-occupancy voxel grids with a tail convention for the
// part outside the box, analytic regions to rasterize, and mu-measures.

#include "ehrhard/height_field.hpp"
#include "ehrhard/weights.hpp"

#include <cstdint>

namespace ehrhard {

/// H(v, r) = {x : x.v >= r}; r may be +-inf.
struct HalfSpace {
  std::vector<double> v;
  double r = 0.0;

  HalfSpace() = default;
  HalfSpace(std::vector<double> dir, double offset) : v(std::move(dir)), r(offset) {
    require(!v.empty() && std::abs(norm(v) - 1.0) <= 1e-12, ErrorCode::invalid_input,
            "half-space normal must be a unit vector");
  }
  bool contains(const double* x) const {
    return dot(v, {x, v.size()}) >= r;
  }
};

/// What the set looks like outside the truncation box.
struct TailConvention {
  enum class Kind : std::uint8_t { empty_outside = 0, full_outside = 1, halfspace_outside = 2 };
  Kind kind = Kind::empty_outside;
  std::vector<double> v;
  double r = 0.0;

  static TailConvention empty() { return {}; }
  static TailConvention full() { return {Kind::full_outside, {}, 0.0}; }
  static TailConvention halfspace(std::vector<double> v, double r) {
    if (r == -kInf) return full();
    if (r == kInf) return empty();
    return {Kind::halfspace_outside, std::move(v), r};
  }

  bool contains(const double* x) const {
    switch (kind) {
      case Kind::empty_outside: return false;
      case Kind::full_outside: return true;
      case Kind::halfspace_outside: return dot(v, {x, v.size()}) >= r;
    }
    return false;
  }
  friend bool operator==(const TailConvention&, const TailConvention&) = default;
};

inline const char* to_string(TailConvention::Kind k) {
  switch (k) {
    case TailConvention::Kind::empty_outside: return "empty_outside";
    case TailConvention::Kind::full_outside: return "full_outside";
    case TailConvention::Kind::halfspace_outside: return "halfspace_outside";
  }
  return "unknown";
}

class IndicatorSet {
 public:
  IndicatorSet() = default;
  IndicatorSet(GridGeometry geom, std::vector<double> occupancy, int subcell, TailConvention tail)
      : geom_(std::move(geom)), occ_(std::move(occupancy)), subcell_(subcell), tail_(std::move(tail)) {
    require(occ_.size() == geom_.size(), ErrorCode::invalid_input, "occupancy size mismatch");
    require(subcell_ >= 1 && subcell_ <= 255, ErrorCode::invalid_input, "subcell must be 1..255");
    for (double o : occ_)
      require(o >= 0.0 && o <= 1.0, ErrorCode::invalid_input, "occupancy outside [0,1]");
  }

  static IndicatorSet empty(const GridGeometry& g, int subcell = 4) {
    return {g, std::vector<double>(g.size(), 0.0), subcell, TailConvention::empty()};
  }
  static IndicatorSet full(const GridGeometry& g, int subcell = 4) {
    return {g, std::vector<double>(g.size(), 1.0), subcell, TailConvention::full()};
  }

  int dim() const { return geom_.dim(); }
  const GridGeometry& geometry() const { return geom_; }
  const std::vector<double>& occupancy() const { return occ_; }
  int subcell() const { return subcell_; }
  const TailConvention& tail() const { return tail_; }

  /// Occupancy interpolated at x; the tail convention applies outside the box.
  double occupancy_at(const double* x) const {
    if (!geom_.box().contains({x, static_cast<std::size_t>(dim())})) return tail_.contains(x) ? 1.0 : 0.0;
    return geom_.interpolate(occ_, x);
  }

 private:
  GridGeometry geom_;
  std::vector<double> occ_;
  int subcell_ = 4;
  TailConvention tail_;
};

// ---------------------------------------------------------------------------
// Analytic regions

class Region {
 public:
  enum class Cover { inside, outside, mixed };

  static Region half_space(std::vector<double> v, double r) {
    auto n = std::make_shared<Node>();
    n->op = Op::halfspace;
    n->v = normalized(v);
    n->r = r;
    return Region(n);
  }
  static Region ball(std::vector<double> center, double radius) {
    require(radius >= 0.0, ErrorCode::invalid_input, "ball radius must be non-negative");
    auto n = std::make_shared<Node>();
    n->op = Op::ball;
    n->v = std::move(center);
    n->r = radius;
    return Region(n);
  }
  static Region box(std::vector<double> lo, std::vector<double> hi) {
    require(lo.size() == hi.size(), ErrorCode::invalid_input, "box corners differ in dimension");
    auto n = std::make_shared<Node>();
    n->op = Op::box;
    n->v = std::move(lo);
    n->w = std::move(hi);
    return Region(n);
  }
  /// {a <= x.v <= b}
  static Region strip(std::vector<double> v, double a, double b) {
    auto u = normalized(v);
    std::vector<double> m(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) m[i] = -u[i];
    return half_space(u, a) & half_space(m, -b);
  }
  static Region subgraph(std::shared_ptr<const HeightField> h) {
    auto n = std::make_shared<Node>();
    n->op = Op::subgraph;
    n->height = std::move(h);
    return Region(n);
  }
  static Region full() { return leaf(Op::full); }
  static Region empty() { return leaf(Op::empty); }

  friend Region operator|(const Region& a, const Region& b) { return combine(Op::unite, a, b); }
  friend Region operator&(const Region& a, const Region& b) { return combine(Op::intersect, a, b); }
  friend Region operator-(const Region& a, const Region& b) { return a & ~b; }
  Region operator~() const {
    auto n = std::make_shared<Node>();
    n->op = Op::complement;
    n->kids = {node_};
    return Region(n);
  }

  bool contains(const double* x) const { return contains(*node_, x); }

  /// Exact classification of the closed box [lo, hi] when cheap; mixed otherwise.
  Cover classify(const double* lo, const double* hi, int n) const { return classify(*node_, lo, hi, n); }

  /// Far-field description; combinations of two different half-spaces
  /// collapse to empty (intersection) or full (union).
  TailConvention tail() const { return tail(*node_); }

  std::optional<HalfSpace> as_halfspace() const {
    if (node_->op != Op::halfspace) return std::nullopt;
    return HalfSpace(node_->v, node_->r);
  }

 private:
  enum class Op { halfspace, ball, box, subgraph, full, empty, complement, unite, intersect };
  struct Node {
    Op op = Op::empty;
    std::vector<double> v, w;
    double r = 0.0;
    std::shared_ptr<const HeightField> height;
    std::vector<std::shared_ptr<const Node>> kids;
  };

  explicit Region(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Region leaf(Op op) {
    auto n = std::make_shared<Node>();
    n->op = op;
    return Region(n);
  }
  static Region combine(Op op, const Region& a, const Region& b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->kids = {a.node_, b.node_};
    return Region(n);
  }

  static bool contains(const Node& n, const double* x) {
    switch (n.op) {
      case Op::halfspace: return dot(n.v, {x, n.v.size()}) >= n.r;
      case Op::ball: {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n.v.size(); ++i) d2 += (x[i] - n.v[i]) * (x[i] - n.v[i]);
        return d2 <= n.r * n.r;
      }
      case Op::box:
        for (std::size_t i = 0; i < n.v.size(); ++i)
          if (x[i] < n.v[i] || x[i] > n.w[i]) return false;
        return true;
      case Op::subgraph: return n.height->contains(x);
      case Op::full: return true;
      case Op::empty: return false;
      case Op::complement: return !contains(*n.kids[0], x);
      case Op::unite: return contains(*n.kids[0], x) || contains(*n.kids[1], x);
      case Op::intersect: return contains(*n.kids[0], x) && contains(*n.kids[1], x);
    }
    return false;
  }

  static Cover classify(const Node& n, const double* lo, const double* hi, int dim) {
    switch (n.op) {
      case Op::halfspace: {
        double mn = 0.0, mx = 0.0;
        for (int i = 0; i < dim; ++i) {
          mn += std::min(n.v[i] * lo[i], n.v[i] * hi[i]);
          mx += std::max(n.v[i] * lo[i], n.v[i] * hi[i]);
        }
        if (mn >= n.r) return Cover::inside;
        if (mx < n.r) return Cover::outside;
        return Cover::mixed;
      }
      case Op::ball: {
        double near = 0.0, far = 0.0;
        for (int i = 0; i < dim; ++i) {
          const double c = n.v[i];
          const double d = c < lo[i] ? lo[i] - c : (c > hi[i] ? c - hi[i] : 0.0);
          near += d * d;
          const double e = std::max(std::abs(c - lo[i]), std::abs(c - hi[i]));
          far += e * e;
        }
        if (far <= n.r * n.r) return Cover::inside;
        if (near > n.r * n.r) return Cover::outside;
        return Cover::mixed;
      }
      case Op::box: {
        bool inside = true;
        for (int i = 0; i < dim; ++i) {
          if (hi[i] < n.v[i] || lo[i] > n.w[i]) return Cover::outside;
          if (lo[i] < n.v[i] || hi[i] > n.w[i]) inside = false;
        }
        return inside ? Cover::inside : Cover::mixed;
      }
      case Op::subgraph: return Cover::mixed;
      case Op::full: return Cover::inside;
      case Op::empty: return Cover::outside;
      case Op::complement: {
        const auto c = classify(*n.kids[0], lo, hi, dim);
        return c == Cover::inside ? Cover::outside : c == Cover::outside ? Cover::inside : Cover::mixed;
      }
      case Op::unite: {
        const auto a = classify(*n.kids[0], lo, hi, dim);
        if (a == Cover::inside) return a;
        const auto b = classify(*n.kids[1], lo, hi, dim);
        if (b == Cover::inside) return b;
        return (a == Cover::outside && b == Cover::outside) ? Cover::outside : Cover::mixed;
      }
      case Op::intersect: {
        const auto a = classify(*n.kids[0], lo, hi, dim);
        if (a == Cover::outside) return a;
        const auto b = classify(*n.kids[1], lo, hi, dim);
        if (b == Cover::outside) return b;
        return (a == Cover::inside && b == Cover::inside) ? Cover::inside : Cover::mixed;
      }
    }
    return Cover::mixed;
  }

  static TailConvention tail(const Node& n) {
    using K = TailConvention::Kind;
    switch (n.op) {
      case Op::halfspace: return TailConvention::halfspace(n.v, n.r);
      case Op::ball:
      case Op::box:
      case Op::empty: return TailConvention::empty();
      case Op::full: return TailConvention::full();
      case Op::subgraph: {
        std::vector<double> finite;
        bool all_pos = true, all_neg = true;
        for (double h : n.height->values) {
          if (h != kInf) all_pos = false;
          if (h != -kInf) all_neg = false;
          if (std::isfinite(h)) finite.push_back(h);
        }
        if (all_pos) return TailConvention::full();
        if (all_neg || finite.empty()) return TailConvention::empty();
        std::nth_element(finite.begin(), finite.begin() + finite.size() / 2, finite.end());
        std::vector<double> down(n.height->up().begin(), n.height->up().end());
        for (double& x : down) x = -x;
        return TailConvention::halfspace(down, -finite[finite.size() / 2]);
      }
      case Op::complement: {
        const auto t = tail(*n.kids[0]);
        if (t.kind == K::empty_outside) return TailConvention::full();
        if (t.kind == K::full_outside) return TailConvention::empty();
        std::vector<double> m = t.v;
        for (double& x : m) x = -x;
        return TailConvention::halfspace(m, -t.r);
      }
      case Op::unite:
      case Op::intersect: {
        const bool uni = n.op == Op::unite;
        const auto a = tail(*n.kids[0]);
        const auto b = tail(*n.kids[1]);
        const K absorbing = uni ? K::full_outside : K::empty_outside;
        const K neutral = uni ? K::empty_outside : K::full_outside;
        if (a.kind == absorbing || b.kind == absorbing) return uni ? TailConvention::full() : TailConvention::empty();
        if (a.kind == neutral) return b;
        if (b.kind == neutral) return a;
        if (a.v == b.v) return TailConvention::halfspace(a.v, uni ? std::min(a.r, b.r) : std::max(a.r, b.r));
        return uni ? TailConvention::full() : TailConvention::empty();
      }
    }
    return TailConvention::empty();
  }

  std::shared_ptr<const Node> node_;
};

/// Fraction of the voxel [lo, lo + h] lying in {x : x.v >= r}; exact.
inline double voxel_halfspace_fraction(int n, const double* lo, const double* h,
                                       std::span<const double> v, double r) {
  double d = r;
  double b[3];
  int m = 0;
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(h[i] * v[i]));
  for (int i = 0; i < n; ++i) {
    d -= lo[i] * v[i];
    const double a = h[i] * v[i];
    if (a < 0.0) d -= a;
    if (std::abs(a) > 1e-12 * scale) b[m++] = std::abs(a);
  }
  // Volume of {y in [0,1]^m : sum b_i y_i <= d}, by inclusion-exclusion.
  if (m == 0) return d <= 0.0 ? 1.0 : 0.0;
  double sum_b = 0.0, prod_b = 1.0;
  for (int i = 0; i < m; ++i) {
    sum_b += b[i];
    prod_b *= b[i];
  }
  if (d <= 0.0) return 1.0;
  if (d >= sum_b) return 0.0;
  double vol = 0.0;
  for (int s = 0; s < (1 << m); ++s) {
    double shift = 0.0;
    int bits = 0;
    for (int i = 0; i < m; ++i)
      if ((s >> i) & 1) {
        shift += b[i];
        ++bits;
      }
    const double t = d - shift;
    if (t > 0.0) vol += ((bits & 1) ? -1.0 : 1.0) * std::pow(t, m);
  }
  double fact = 1.0;
  for (int i = 2; i <= m; ++i) fact *= i;
  return clamp01(1.0 - vol / (fact * prod_b));
}

inline GridGeometry density_grid(const WeightedDensity& w, int res) {
  return GridGeometry::cubic(w.box(), res);
}

/// Occupancy by s^n subsampling of mixed voxels (exact for a single half-space).
inline IndicatorSet rasterize(const Region& region, const GridGeometry& g, int subcell = 4) {
  require(subcell >= 1, ErrorCode::invalid_input, "subcell must be positive");
  const int n = g.dim();
  std::vector<double> occ(g.size(), 0.0);
  const auto hs = region.as_halfspace();
  const int samples = static_cast<int>(std::lround(std::pow(subcell, n)));
  parallel::for_each_index(g.size(), [&](std::size_t lin) {
    const auto idx = g.unravel(lin);
    double lo[3], hi[3], x[3];
    for (int a = 0; a < n; ++a) {
      lo[a] = g.box().lo[a] + idx[a] * g.spacing(a);
      hi[a] = lo[a] + g.spacing(a);
    }
    const auto cover = region.classify(lo, hi, n);
    if (cover == Region::Cover::inside) {
      occ[lin] = 1.0;
      return;
    }
    if (cover == Region::Cover::outside) return;
    if (hs) {
      occ[lin] = voxel_halfspace_fraction(n, lo, g.spacing().data(), hs->v, hs->r);
      return;
    }
    int count = 0;
    for (int s = 0; s < samples; ++s) {
      int rem = s;
      for (int a = n - 1; a >= 0; --a) {
        x[a] = lo[a] + (rem % subcell + 0.5) / subcell * g.spacing(a);
        rem /= subcell;
      }
      count += region.contains(x);
    }
    occ[lin] = static_cast<double>(count) / samples;
  });
  double total = 0.0;
  for (double o : occ) total += o;
  require(total > 0.0, ErrorCode::empty_region, "region has zero volume inside the box");
  return IndicatorSet(g, std::move(occ), subcell, region.tail());
}

inline IndicatorSet rasterize(const Region& region, const WeightedDensity& w, int res,
                              int subcell = 4) {
  return rasterize(region, density_grid(w, res), subcell);
}

// ---------------------------------------------------------------------------
// Measures

/// mu(R^n \ box) for an arbitrary box.
inline double mass_outside(const WeightedDensity& w, const Box& box) {
  if (w.is_zero()) return 0.0;
  if (auto f = w.separable_factors()) {
    if (std::holds_alternative<UniformWeight>(w.kind())) return 0.0;
    // sum over axes of the slab masses outside [lo_i, hi_i] with earlier axes inside
    double acc = 0.0, inside_prefix = 1.0;
    for (int i = 0; i < w.dim(); ++i) {
      double rest = 1.0;
      for (int j = i + 1; j < w.dim(); ++j) rest *= (*f)[j].total();
      const auto& fi = (*f)[i];
      acc += inside_prefix * (fi.cdf(box.lo[i]) + fi.upper(box.hi[i])) * rest;
      inside_prefix *= std::max(0.0, fi.total() - fi.cdf(box.lo[i]) - fi.upper(box.hi[i]));
    }
    return acc;
  }
  return w.outside_mass();
}

inline double tail_mass(const WeightedDensity& w, const IndicatorSet& E) {
  const auto& t = E.tail();
  switch (t.kind) {
    case TailConvention::Kind::empty_outside: return 0.0;
    case TailConvention::Kind::full_outside: return mass_outside(w, E.geometry().box());
    case TailConvention::Kind::halfspace_outside: {
      const double tot = w.total();
      if (tot <= 0.0) return 0.0;
      return mass_outside(w, E.geometry().box()) * w.halfspace_mass(t.v, t.r) / tot;
    }
  }
  return 0.0;
}

inline double mu_measure(const WeightedDensity& w, const IndicatorSet& E) {
  const auto masses = w.voxel_masses(E.geometry());
  const auto& occ = E.occupancy();
  std::vector<double> terms(occ.size());
  for (std::size_t i = 0; i < occ.size(); ++i) terms[i] = occ[i] * (*masses)[i];
  return pairwise_sum(terms) + tail_mass(w, E);
}

/// mu(E \ F) with the voxel convention max(0, o_E - o_F).
inline double difference_measure(const WeightedDensity& w, const IndicatorSet& E,
                                  const IndicatorSet& F) {
  require(E.geometry() == F.geometry(), ErrorCode::grid_mismatch, "sets live on different grids");
  const auto masses = w.voxel_masses(E.geometry());
  std::vector<double> terms(masses->size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = std::max(0.0, E.occupancy()[i] - F.occupancy()[i]) * (*masses)[i];
  return pairwise_sum(terms);
}

inline double symm_diff_measure(const WeightedDensity& w, const IndicatorSet& E,
                                const IndicatorSet& F) {
  require(E.geometry() == F.geometry(), ErrorCode::grid_mismatch, "sets live on different grids");
  const auto masses = w.voxel_masses(E.geometry());
  std::vector<double> terms(masses->size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = std::abs(E.occupancy()[i] - F.occupancy()[i]) * (*masses)[i];
  return pairwise_sum(terms);
}

/// Largest H(v, r) with mu(H) = mass; r is found from the 1D marginal of mu
/// along v, independent of any grid.
inline HalfSpace half_space_with_mass(const WeightedDensity& w, std::span<const double> v_in,
                                      double mass) {
  const auto v = normalized(v_in);
  const double tot = w.total();
  require(mass <= tot * (1.0 + 1e-9) + w.tail_tol(), ErrorCode::out_of_range,
          "mass exceeds the total mass");
  if (mass >= tot * (1.0 - 1e-12)) return HalfSpace(v, -kInf);
  if (mass <= 0.0) {
    if (w.positive_everywhere()) return HalfSpace(v, kInf);
    double sup = 0.0;
    for (int i = 0; i < w.dim(); ++i) sup += std::max(v[i] * w.box().lo[i], v[i] * w.box().hi[i]);
    return HalfSpace(v, sup);
  }
  if (auto g = w.gaussian_params()) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < w.dim(); ++i) {
      mean += g->a[i] * v[i];
      var += v[i] * v[i] / (2.0 * g->c[i]);
    }
    return HalfSpace(v, mean + std::sqrt(2.0 * var) * boost::math::erfc_inv(2.0 * mass / tot));
  }
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < w.dim(); ++i) {
    lo += std::min(v[i] * w.box().lo[i], v[i] * w.box().hi[i]);
    hi += std::max(v[i] * w.box().lo[i], v[i] * w.box().hi[i]);
  }
  while (w.halfspace_mass(v, lo) <= mass) lo -= 1.0 + std::abs(lo);
  while (w.halfspace_mass(v, hi) > mass) hi += 1.0 + std::abs(hi);
  double r = hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double m = w.halfspace_mass(v, mid);
    if (m <= mass) {
      hi = mid;
      r = mid;
    } else {
      lo = mid;
    }
  }
  return HalfSpace(v, r);
}

inline HalfSpace half_space_equal_measure(const WeightedDensity& w, const IndicatorSet& E,
                                          std::span<const double> v) {
  return half_space_with_mass(w, v, mu_measure(w, E));
}

}  // namespace ehrhard
