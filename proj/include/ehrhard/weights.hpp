#pragma once

// Weighted measures mu = f dx: analytic density families, gradients, frames,
// restrictions to lines (fiber CDFs and quantiles), half-space masses and
// cached voxel masses.

#include "ehrhard/core.hpp"
#include "ehrhard/density1d.hpp"
#include "ehrhard/grid.hpp"
#include "ehrhard/quadrature.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <variant>

namespace ehrhard {

class WeightedDensity;

/// C exp(-c |x - a|^2)
struct IsotropicGaussian {
  double C;
  double c;
  std::vector<double> a;
};

/// C exp(-sum_i c_i (x_i - a_i)^2)
struct AnisotropicGaussian {
  double C;
  std::vector<double> c;
  std::vector<double> a;
};

struct ProductDensity {
  std::vector<Density1D> factors;
};

/// Product of logistic densities with one scale per axis.
struct LogisticProduct {
  std::vector<double> scales;
};

struct GridSampled {
  std::shared_ptr<const GridField> field;
};

/// Multiplicative bump: f = base * (1 + amplitude exp(-|x - center|^2 / (2 width^2))).
struct Bump {
  std::vector<double> center;
  double width = 1.0;
  double amplitude = 0.0;
};

struct Perturbed {
  std::shared_ptr<const WeightedDensity> base;
  Bump bump;
};

/// base + (1/index) (2 pi)^{-n} exp(-|x|^2 / 2)
struct Regularized {
  std::shared_ptr<const WeightedDensity> base;
  double index;
};

struct ZeroDensity {};

/// f = 1 on the truncation box, 0 outside.
struct UniformWeight {};

/// Orthonormal frame; column j is e(j). The fiber axis is e(axis()).
class Frame {
 public:
  Frame() = default;
  Frame(std::vector<double> columns, int axis) : cols_(std::move(columns)), axis_(axis) {
    n_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cols_.size()))));
    require(n_ >= 1 && n_ * n_ == static_cast<int>(cols_.size()), ErrorCode::invalid_input,
            "frame needs n*n entries");
    require(axis_ >= 0 && axis_ < n_, ErrorCode::invalid_input, "frame axis out of range");
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const double d = dot(e(i), e(j));
        require(std::abs(d - (i == j ? 1.0 : 0.0)) <= 1e-12, ErrorCode::invalid_input,
                "frame columns are not orthonormal");
      }
  }

  static Frame identity(int n, int axis = -1) {
    std::vector<double> cols(n * n, 0.0);
    for (int i = 0; i < n; ++i) cols[i * n + i] = 1.0;
    return Frame(std::move(cols), axis < 0 ? n - 1 : axis);
  }

  /// Frame whose fiber axis is the unit vector v; the remaining columns
  /// complete it by Gram-Schmidt against the standard basis.
  static Frame along(std::span<const double> v, int axis = -1) {
    const int n = static_cast<int>(v.size());
    if (axis < 0) axis = n - 1;
    std::vector<std::vector<double>> basis{normalized(v)};
    for (int k = 0; k < n && static_cast<int>(basis.size()) < n; ++k) {
      std::vector<double> u(n, 0.0);
      u[k] = 1.0;
      for (const auto& b : basis) {
        const double d = dot(u, b);
        for (int i = 0; i < n; ++i) u[i] -= d * b[i];
      }
      if (norm(u) < 1e-6) continue;
      u = normalized(u);
      for (const auto& b : basis) {  // second pass for orthogonality to 1e-16
        const double d = dot(u, b);
        for (int i = 0; i < n; ++i) u[i] -= d * b[i];
      }
      basis.push_back(normalized(u));
    }
    std::vector<double> cols;
    cols.reserve(n * n);
    for (int j = 0, k = 1; j < n; ++j) {
      const auto& col = j == axis ? basis[0] : basis[k++];
      cols.insert(cols.end(), col.begin(), col.end());
    }
    return Frame(std::move(cols), axis);
  }

  /// 2D frame rotated by theta; axis 1 is (-sin, cos).
  static Frame rotation2d(double theta, int axis = 1) {
    const double c = std::cos(theta), s = std::sin(theta);
    return Frame({c, s, -s, c}, axis);
  }

  /// Haar-random frame via Gram-Schmidt on Gaussian vectors.
  static Frame random(int n, std::mt19937_64& rng, int axis = -1) {
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> basis;
    while (static_cast<int>(basis.size()) < n) {
      std::vector<double> u(n);
      for (double& x : u) x = g(rng);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
          const double d = dot(u, b);
          for (int i = 0; i < n; ++i) u[i] -= d * b[i];
        }
      if (norm(u) < 1e-6) continue;
      basis.push_back(normalized(u));
    }
    std::vector<double> cols;
    for (const auto& b : basis) cols.insert(cols.end(), b.begin(), b.end());
    return Frame(std::move(cols), axis < 0 ? n - 1 : axis);
  }

  int dim() const { return n_; }
  int axis() const { return axis_; }
  std::span<const double> e(int j) const { return {cols_.data() + j * n_, static_cast<std::size_t>(n_)}; }
  std::span<const double> fiber() const { return e(axis_); }
  const std::vector<double>& columns() const { return cols_; }

  /// Point on the fiber base with coordinates xp (one per non-axis column).
  std::vector<double> base_point(std::span<const double> xp) const {
    require(static_cast<int>(xp.size()) == n_ - 1, ErrorCode::invalid_input,
            "fiber base point needs n-1 coordinates");
    std::vector<double> x(n_, 0.0);
    for (int j = 0, k = 0; j < n_; ++j) {
      if (j == axis_) continue;
      for (int i = 0; i < n_; ++i) x[i] += xp[k] * e(j)[i];
      ++k;
    }
    return x;
  }

  /// Coordinates of x along the non-axis columns.
  std::vector<double> base_coords(std::span<const double> x) const {
    std::vector<double> z;
    for (int j = 0; j < n_; ++j)
      if (j != axis_) z.push_back(dot(x, e(j)));
    return z;
  }

 private:
  std::vector<double> cols_;
  int n_ = 0;
  int axis_ = 0;
};

/// Parameter interval [t0, t1] of the line o + t d inside the box; empty if t0 > t1.
inline std::pair<double, double> chord(const Box& box, std::span<const double> o,
                                       std::span<const double> d) {
  double t0 = -kInf, t1 = kInf;
  for (int i = 0; i < box.dim(); ++i) {
    if (d[i] == 0.0) {
      if (o[i] < box.lo[i] || o[i] > box.hi[i]) return {1.0, 0.0};
      continue;
    }
    double a = (box.lo[i] - o[i]) / d[i];
    double b = (box.hi[i] - o[i]) / d[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return {t0, t1};
}

/// The one-dimensional measure f(o + t d) dt along a line.
class LineRestriction {
 public:
  enum class Mode { zero, gaussian, axis_factor, numeric };

  Mode mode() const { return mode_; }
  bool closed_form() const { return mode_ != Mode::numeric; }

  double eval(double t) const;
  double cdf(double t) const {
    if (t == -kInf) return 0.0;
    if (t == kInf) return total();
    switch (mode_) {
      case Mode::zero: return 0.0;
      case Mode::gaussian: return gauss_mass_ * 0.5 * std::erfc(-root_a_ * (t - t0_));
      case Mode::axis_factor:
        return sign_ > 0 ? coef_ * factor_.cdf(offset_ + t) : coef_ * factor_.upper(offset_ - t);
      case Mode::numeric: return numeric_mass(chord_.first, std::min(t, chord_.second));
    }
    return 0.0;
  }
  double upper(double t) const {
    if (t == -kInf) return total();
    if (t == kInf) return 0.0;
    switch (mode_) {
      case Mode::zero: return 0.0;
      case Mode::gaussian: return gauss_mass_ * 0.5 * std::erfc(root_a_ * (t - t0_));
      case Mode::axis_factor:
        return sign_ > 0 ? coef_ * factor_.upper(offset_ + t) : coef_ * factor_.cdf(offset_ - t);
      case Mode::numeric: return numeric_mass(std::max(t, chord_.first), chord_.second);
    }
    return 0.0;
  }
  double total() const { return total_; }

  /// Closure of the parameter set where the line density can be positive.
  std::pair<double, double> support() const {
    switch (mode_) {
      case Mode::zero: return {kInf, -kInf};
      case Mode::gaussian: return {-kInf, kInf};
      case Mode::axis_factor: {
        const auto [a, b] = factor_.support();
        return sign_ > 0 ? std::pair{a - offset_, b - offset_} : std::pair{offset_ - b, offset_ - a};
      }
      case Mode::numeric: return chord_;
    }
    return {-kInf, kInf};
  }

  /// sup{s : cdf(s) <= m}: the top of the largest lower half-line of mass m.
  double quantile_lower(double m) const {
    const double tot = total_;
    require(m <= tot * (1.0 + 1e-9) + 1e-14, ErrorCode::out_of_range,
            "requested mass exceeds the fiber mass");
    const auto [s0, s1] = support();
    if (m >= tot) return kInf;
    if (m <= 0.0 && mode_ == Mode::gaussian) return -kInf;
    if (mode_ == Mode::gaussian) return t0_ - boost::math::erfc_inv(2.0 * m / tot) / root_a_;
    double lo = s0, hi = s1;
    if (!std::isfinite(lo)) {
      lo = std::isfinite(hi) ? hi - 1.0 : -1.0;
      while (cdf(lo) > m) lo -= 2.0 * std::abs(lo) + 1.0;
    }
    if (!std::isfinite(hi)) {
      hi = lo + 1.0;
      while (cdf(hi) <= m) hi += 2.0 * std::abs(hi) + 1.0;
    }
    if (cdf(hi) <= m) return kInf;
    return bisect_first_true(lo, hi, [&](double c) { return cdf(c) > m; });
  }

  /// Smallest c with upper(c) = p (the largest half-line [c, inf) of mass p).
  /// p = 0 gives the supremum of the support, p = total() gives -inf.
  double quantile_upper(double p) const {
    const double tot = total_;
    require(p <= tot * (1.0 + 1e-9) + 1e-14, ErrorCode::out_of_range,
            "requested mass exceeds the fiber mass");
    if (p >= tot * (1.0 - 1e-13) && p > 0.0) return -kInf;
    const auto [s0, s1] = support();
    if (p <= 0.0 || tot == 0.0) return mode_ == Mode::zero ? kInf : s1;
    if (mode_ == Mode::gaussian) return t0_ + boost::math::erfc_inv(2.0 * p / tot) / root_a_;
    double lo = s0, hi = s1;
    if (!std::isfinite(lo)) {
      lo = std::isfinite(hi) ? hi - 1.0 : -1.0;
      while (upper(lo) <= p) lo -= 2.0 * std::abs(lo) + 1.0;
    }
    if (!std::isfinite(hi)) {
      hi = lo + 1.0;
      while (upper(hi) > p) hi += 2.0 * std::abs(hi) + 1.0;
    }
    return bisect_first_true(lo, hi, [&](double c) { return upper(c) <= p; });
  }

 private:
  friend class WeightedDensity;

  double numeric_mass(double a, double b) const {
    if (!(a < b)) return 0.0;
    if (grid_step_ > 0.0) {
      const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / grid_step_)));
      const double step = (b - a) / pieces;
      double acc = 0.5 * (eval(a) + eval(b));
      for (int k = 1; k < pieces; ++k) acc += eval(a + k * step);
      return acc * step;
    }
    return quad::integrate([this](double t) { return eval(t); }, a, b, 1e-10);
  }

  Mode mode_ = Mode::zero;
  double total_ = 0.0;
  // gaussian: gauss_mass_ * sqrt(A/pi) exp(-A (t - t0)^2)
  double gauss_mass_ = 0.0, root_a_ = 1.0, t0_ = 0.0;
  // axis_factor: coef_ * factor(offset_ + sign_ t)
  double coef_ = 0.0, offset_ = 0.0;
  int sign_ = 1;
  Density1D factor_;
  // numeric
  const WeightedDensity* density_ = nullptr;
  std::vector<double> origin_, dir_;
  std::pair<double, double> chord_{1.0, 0.0};
  double grid_step_ = 0.0;
};

struct MassReport {
  double value = 0.0;       // best estimate of mu(R^n)
  double box_mass = 0.0;    // mu(truncation box)
  double tail_bound = 0.0;  // certified bound on mu(R^n \ box)
};

struct GaussianParams {
  double C;
  std::vector<double> c;  // per-axis exponent coefficients
  std::vector<double> a;
};

struct DensityOptions {
  double tail_tol = 1e-9;
  std::optional<Box> box;
};

class WeightedDensity {
 public:
  using Kind = std::variant<IsotropicGaussian, AnisotropicGaussian, ProductDensity,
                            LogisticProduct, GridSampled, Perturbed, Regularized, ZeroDensity,
                            UniformWeight>;

  using Options = DensityOptions;

  // ---- factories -----------------------------------------------------------

  /// C exp(-c|x-a|^2); C defaults to the probability normalization (c/pi)^{n/2}.
  static WeightedDensity isotropic_gaussian(int n, double c = 0.5, std::vector<double> a = {},
                                            std::optional<double> C = {}, Options opts = {}) {
    require(n >= 1, ErrorCode::invalid_input, "dimension must be positive");
    require(c > 0.0, ErrorCode::invalid_input, "gaussian needs c > 0");
    if (a.empty()) a.assign(n, 0.0);
    require(static_cast<int>(a.size()) == n, ErrorCode::invalid_input, "center dimension mismatch");
    const double cc = C.value_or(std::pow(c / std::numbers::pi, 0.5 * n));
    require(cc > 0.0, ErrorCode::invalid_input, "gaussian needs C > 0");
    return WeightedDensity(IsotropicGaussian{cc, c, std::move(a)}, n, opts);
  }

  static WeightedDensity standard_gaussian(int n, Options opts = {}) {
    return isotropic_gaussian(n, 0.5, {}, std::nullopt, opts);
  }

  static WeightedDensity anisotropic_gaussian(std::vector<double> c, std::vector<double> a = {},
                                              std::optional<double> C = {}, Options opts = {}) {
    const int n = static_cast<int>(c.size());
    require(n >= 1, ErrorCode::invalid_input, "dimension must be positive");
    double norm_c = 1.0;
    for (double ci : c) {
      require(ci > 0.0, ErrorCode::invalid_input, "gaussian needs c_i > 0");
      norm_c *= std::sqrt(ci / std::numbers::pi);
    }
    if (a.empty()) a.assign(n, 0.0);
    require(static_cast<int>(a.size()) == n, ErrorCode::invalid_input, "center dimension mismatch");
    return WeightedDensity(AnisotropicGaussian{C.value_or(norm_c), std::move(c), std::move(a)}, n,
                           opts);
  }

  static WeightedDensity product(std::vector<Density1D> factors, Options opts = {}) {
    const int n = static_cast<int>(factors.size());
    require(n >= 1, ErrorCode::invalid_input, "product needs at least one factor");
    return WeightedDensity(ProductDensity{std::move(factors)}, n, opts);
  }

  static WeightedDensity logistic_product(std::vector<double> scales, Options opts = {}) {
    const int n = static_cast<int>(scales.size());
    require(n >= 1, ErrorCode::invalid_input, "logistic product needs at least one axis");
    for (double s : scales) require(s > 0.0, ErrorCode::invalid_input, "logistic scale must be positive");
    return WeightedDensity(LogisticProduct{std::move(scales)}, n, opts);
  }

  /// Tail mass outside the field's box is declared, not certified.
  static WeightedDensity grid_sampled(GridField field, double declared_tail = 0.0,
                                      double tail_tol = 1e-9) {
    field.validate();
    const int n = field.dim();
    Options opts;
    opts.tail_tol = std::max(tail_tol, declared_tail);
    opts.box = field.box;
    WeightedDensity w(GridSampled{std::make_shared<const GridField>(std::move(field))}, n, opts);
    w.tail_bound_ = declared_tail;
    return w;
  }

  static WeightedDensity perturbed(const WeightedDensity& base, Bump bump) {
    require(static_cast<int>(bump.center.size()) == base.dim(), ErrorCode::invalid_input,
            "bump center dimension mismatch");
    require(bump.width > 0.0 && bump.amplitude > -1.0, ErrorCode::invalid_input,
            "bump needs width > 0 and amplitude > -1");
    Options opts{base.tail_tol_, base.box_};
    WeightedDensity w(Perturbed{std::make_shared<const WeightedDensity>(base), std::move(bump)},
                      base.dim(), opts, /*analytic_box=*/false);
    const double amp = std::get<Perturbed>(w.kind_).bump.amplitude;
    w.tail_bound_ = (1.0 + std::max(0.0, amp)) * base.tail_bound_;
    return w;
  }

  static WeightedDensity regularized(const WeightedDensity& base, double index) {
    require(index >= 1.0, ErrorCode::invalid_input, "regularization index must be >= 1");
    const int n = base.dim();
    const auto std_box = standard_gaussian(n, {base.tail_tol_, std::nullopt}).box();
    Box box = base.box_;
    for (int i = 0; i < n; ++i) {
      box.lo[i] = std::min(box.lo[i], std_box.lo[i]);
      box.hi[i] = std::max(box.hi[i], std_box.hi[i]);
    }
    Options opts{base.tail_tol_, box};
    WeightedDensity w(Regularized{std::make_shared<const WeightedDensity>(base), index}, n, opts,
                      false);
    double inside = 1.0;
    const auto g = Density1D::standard_gaussian();
    for (int i = 0; i < n; ++i) inside *= g.cdf(box.hi[i]) - g.cdf(box.lo[i]);
    const double extra = std::pow(2.0 * std::numbers::pi, -0.5 * n) / index;
    w.tail_bound_ = base.tail_bound_ + extra * (1.0 - inside);
    return w;
  }

  static WeightedDensity zero(Box box) {
    const int n = box.dim();
    return WeightedDensity(ZeroDensity{}, n, {1e-9, std::move(box)}, false);
  }

  static WeightedDensity uniform(Box box) {
    const int n = box.dim();
    return WeightedDensity(UniformWeight{}, n, {1e-9, std::move(box)}, false);
  }

  // ---- accessors -----------------------------------------------------------

  int dim() const { return dim_; }
  const Box& box() const { return box_; }
  double tail_tol() const { return tail_tol_; }
  double tail_bound() const { return tail_bound_; }
  const Kind& kind() const { return kind_; }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, IsotropicGaussian>) return "isotropic_gaussian";
          else if constexpr (std::is_same_v<K, AnisotropicGaussian>) return "anisotropic_gaussian";
          else if constexpr (std::is_same_v<K, ProductDensity>) return "product_1d";
          else if constexpr (std::is_same_v<K, LogisticProduct>) return "logistic_product";
          else if constexpr (std::is_same_v<K, GridSampled>) return "grid_sampled";
          else if constexpr (std::is_same_v<K, Perturbed>) return "perturbed";
          else if constexpr (std::is_same_v<K, Regularized>) return "regularized";
          else if constexpr (std::is_same_v<K, ZeroDensity>) return "zero";
          else return "uniform";
        },
        kind_);
  }

  bool is_zero() const { return std::holds_alternative<ZeroDensity>(kind_); }
  bool analytic() const {
    return !std::holds_alternative<GridSampled>(kind_);
  }

  /// True when f > 0 on all of R^n.
  bool positive_everywhere() const {
    if (gaussian_params()) return true;
    if (std::holds_alternative<LogisticProduct>(kind_)) return true;
    if (const auto* p = std::get_if<ProductDensity>(&kind_)) {
      for (const auto& f : p->factors) {
        const auto [a, b] = f.support();
        if (std::isfinite(a) || std::isfinite(b)) return false;
      }
      return true;
    }
    if (const auto* p = std::get_if<Perturbed>(&kind_)) return p->base->positive_everywhere();
    return std::holds_alternative<Regularized>(kind_);
  }

  /// Exponent data when f is a (possibly anisotropic) Gaussian.
  std::optional<GaussianParams> gaussian_params() const {
    if (const auto* g = std::get_if<IsotropicGaussian>(&kind_))
      return GaussianParams{g->C, std::vector<double>(dim_, g->c), g->a};
    if (const auto* g = std::get_if<AnisotropicGaussian>(&kind_))
      return GaussianParams{g->C, g->c, g->a};
    return std::nullopt;
  }

  /// One-dimensional factors when f = prod_i f_i(x_i).
  std::optional<std::vector<Density1D>> separable_factors() const {
    if (auto g = gaussian_params()) {
      std::vector<Density1D> out;
      for (int i = 0; i < dim_; ++i)
        out.emplace_back(Gaussian1D{g->a[i], g->c[i], i == 0 ? g->C : 1.0});
      return out;
    }
    if (const auto* p = std::get_if<ProductDensity>(&kind_)) return p->factors;
    if (const auto* l = std::get_if<LogisticProduct>(&kind_)) {
      std::vector<Density1D> out;
      for (double s : l->scales) out.push_back(Density1D::logistic(s));
      return out;
    }
    if (std::holds_alternative<UniformWeight>(kind_)) {
      std::vector<Density1D> out;
      for (int i = 0; i < dim_; ++i) out.emplace_back(Uniform1D{box_.lo[i], box_.hi[i], 1.0});
      return out;
    }
    return std::nullopt;
  }

  /// A point around which the density is centred (Gaussian mean, logistic
  /// location); the box centre otherwise.
  std::vector<double> center() const {
    if (auto g = gaussian_params()) return g->a;
    if (const auto* p = std::get_if<Perturbed>(&kind_)) return p->base->center();
    if (const auto* p = std::get_if<Regularized>(&kind_)) return p->base->center();
    if (std::holds_alternative<LogisticProduct>(kind_)) return std::vector<double>(dim_, 0.0);
    if (const auto* p = std::get_if<ProductDensity>(&kind_)) {
      std::vector<double> c;
      for (const auto& f : p->factors) c.push_back(f.symmetry_center().value_or(f.quantile(0.5 * f.total())));
      return c;
    }
    std::vector<double> c(dim_);
    for (int i = 0; i < dim_; ++i) c[i] = 0.5 * (box_.lo[i] + box_.hi[i]);
    return c;
  }

  // ---- pointwise -----------------------------------------------------------

  double eval(const double* x) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, IsotropicGaussian>) {
            double r2 = 0.0;
            for (int i = 0; i < dim_; ++i) {
              const double u = x[i] - k.a[i];
              r2 += u * u;
            }
            return k.C * std::exp(-k.c * r2);
          } else if constexpr (std::is_same_v<K, AnisotropicGaussian>) {
            double q = 0.0;
            for (int i = 0; i < dim_; ++i) {
              const double u = x[i] - k.a[i];
              q += k.c[i] * u * u;
            }
            return k.C * std::exp(-q);
          } else if constexpr (std::is_same_v<K, ProductDensity>) {
            double v = 1.0;
            for (int i = 0; i < dim_ && v != 0.0; ++i) v *= k.factors[i].eval(x[i]);
            return v;
          } else if constexpr (std::is_same_v<K, LogisticProduct>) {
            double v = 1.0;
            for (int i = 0; i < dim_; ++i) {
              const double e = std::exp(-std::abs(x[i] / k.scales[i]));
              v *= e / ((1.0 + e) * (1.0 + e)) / k.scales[i];
            }
            return v;
          } else if constexpr (std::is_same_v<K, GridSampled>) {
            return k.field->eval(x);
          } else if constexpr (std::is_same_v<K, Perturbed>) {
            return k.base->eval(x) * (1.0 + k.bump.amplitude * bump_value(k.bump, x));
          } else if constexpr (std::is_same_v<K, Regularized>) {
            double r2 = 0.0;
            for (int i = 0; i < dim_; ++i) r2 += x[i] * x[i];
            return k.base->eval(x) +
                   std::pow(2.0 * std::numbers::pi, -dim_) / k.index * std::exp(-0.5 * r2);
          } else if constexpr (std::is_same_v<K, ZeroDensity>) {
            return 0.0;
          } else {
            return box_.contains({x, static_cast<std::size_t>(dim_)}) ? 1.0 : 0.0;
          }
        },
        kind_);
  }
  double eval(std::span<const double> x) const { return eval(x.data()); }

  /// Gradient of f at x. Grid kinds use central differences (order 2) and
  /// signal unsupported within one node spacing of the field boundary.
  std::vector<double> grad(std::span<const double> xs) const {
    const double* x = xs.data();
    std::vector<double> g(dim_, 0.0);
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, IsotropicGaussian>) {
            const double f = eval(x);
            for (int i = 0; i < dim_; ++i) g[i] = -2.0 * k.c * (x[i] - k.a[i]) * f;
          } else if constexpr (std::is_same_v<K, AnisotropicGaussian>) {
            const double f = eval(x);
            for (int i = 0; i < dim_; ++i) g[i] = -2.0 * k.c[i] * (x[i] - k.a[i]) * f;
          } else if constexpr (std::is_same_v<K, ProductDensity> ||
                               std::is_same_v<K, LogisticProduct>) {
            const auto factors = *separable_factors();
            for (int i = 0; i < dim_; ++i) {
              double v = factors[i].derivative(x[i]);
              for (int j = 0; j < dim_; ++j)
                if (j != i) v *= factors[j].eval(x[j]);
              g[i] = v;
            }
          } else if constexpr (std::is_same_v<K, GridSampled>) {
            std::vector<double> p(x, x + dim_);
            for (int i = 0; i < dim_; ++i) {
              const double h = k.field->spacing(i);
              require(x[i] - h >= k.field->box.lo[i] && x[i] + h <= k.field->box.hi[i],
                      ErrorCode::unsupported, "gradient requested in the grid boundary layer");
              p[i] = x[i] + h;
              const double fp = k.field->eval(p.data());
              p[i] = x[i] - h;
              const double fm = k.field->eval(p.data());
              p[i] = x[i];
              g[i] = (fp - fm) / (2.0 * h);
            }
          } else if constexpr (std::is_same_v<K, Perturbed>) {
            const auto gb = k.base->grad(xs);
            const double b = k.base->eval(x);
            const double bump = bump_value(k.bump, x);
            const double w2 = k.bump.width * k.bump.width;
            for (int i = 0; i < dim_; ++i)
              g[i] = gb[i] * (1.0 + k.bump.amplitude * bump) -
                     b * k.bump.amplitude * bump * (x[i] - k.bump.center[i]) / w2;
          } else if constexpr (std::is_same_v<K, Regularized>) {
            const auto gb = k.base->grad(xs);
            double r2 = 0.0;
            for (int i = 0; i < dim_; ++i) r2 += x[i] * x[i];
            const double s = std::pow(2.0 * std::numbers::pi, -dim_) / k.index * std::exp(-0.5 * r2);
            for (int i = 0; i < dim_; ++i) g[i] = gb[i] - x[i] * s;
          }
        },
        kind_);
    return g;
  }

  // ---- masses --------------------------------------------------------------

  MassReport total_mass() const {
    MassReport r;
    r.tail_bound = tail_bound_;
    if (auto f = separable_factors()) {
      double tot = 1.0, inside = 1.0;
      for (int i = 0; i < dim_; ++i) {
        tot *= (*f)[i].total();
        inside *= (*f)[i].mass(box_.lo[i], box_.hi[i]);
      }
      r.value = tot;
      r.box_mass = inside;
      return r;
    }
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, GridSampled>) {
            r.box_mass = trapezoid_total(*k.field);
            r.value = r.box_mass + tail_bound_;
          } else if constexpr (std::is_same_v<K, Perturbed>) {
            const auto base = k.base->total_mass();
            const double extra = bump_integral(k);
            r.value = base.value + extra;
            r.box_mass = base.box_mass + extra;
          } else if constexpr (std::is_same_v<K, Regularized>) {
            const auto base = k.base->total_mass();
            const double g = std::pow(2.0 * std::numbers::pi, -0.5 * dim_) / k.index;
            double inside = 1.0;
            const auto s = Density1D::standard_gaussian();
            for (int i = 0; i < dim_; ++i) inside *= s.cdf(box_.hi[i]) - s.cdf(box_.lo[i]);
            r.value = base.value + g;
            r.box_mass = base.box_mass + g * inside;
          }
        },
        kind_);
    return r;
  }
  double total() const { return total_mass().value; }

  /// mu of the part of R^n outside the truncation box.
  double outside_mass() const {
    const auto m = total_mass();
    return std::max(0.0, m.value - m.box_mass);
  }

  /// Restriction of f to the line o + t d (|d| = 1).
  LineRestriction line(std::span<const double> o, std::span<const double> d) const {
    LineRestriction L;
    L.density_ = this;
    L.origin_.assign(o.begin(), o.end());
    L.dir_.assign(d.begin(), d.end());
    if (is_zero()) {
      L.mode_ = LineRestriction::Mode::zero;
      return L;
    }
    if (auto g = gaussian_params()) {
      // exponent A t^2 + 2 B t + D
      double A = 0.0, B = 0.0, D = 0.0;
      for (int i = 0; i < dim_; ++i) {
        const double u = o[i] - g->a[i];
        A += g->c[i] * d[i] * d[i];
        B += g->c[i] * d[i] * u;
        D += g->c[i] * u * u;
      }
      L.mode_ = LineRestriction::Mode::gaussian;
      L.t0_ = -B / A;
      L.root_a_ = std::sqrt(A);
      L.gauss_mass_ = g->C * std::exp(-(D - B * B / A)) * std::sqrt(std::numbers::pi / A);
      L.total_ = L.gauss_mass_;
      return L;
    }
    if (auto f = separable_factors(); f && !std::holds_alternative<UniformWeight>(kind_)) {
      int axis = -1;
      for (int i = 0; i < dim_; ++i)
        if (std::abs(std::abs(d[i]) - 1.0) <= 1e-15) axis = i;
      if (axis >= 0) {
        double coef = 1.0;
        for (int i = 0; i < dim_; ++i)
          if (i != axis) coef *= (*f)[i].eval(o[i]);
        L.mode_ = LineRestriction::Mode::axis_factor;
        L.coef_ = coef;
        L.factor_ = (*f)[axis];
        L.sign_ = d[axis] > 0.0 ? 1 : -1;
        L.offset_ = o[axis];
        L.total_ = coef * L.factor_.total();
        return L;
      }
    }
    L.mode_ = LineRestriction::Mode::numeric;
    L.chord_ = chord(box_, o, d);
    if (const auto* gs = std::get_if<GridSampled>(&kind_)) {
      double h = kInf;
      for (int i = 0; i < dim_; ++i) h = std::min(h, gs->field->spacing(i));
      L.grid_step_ = h;
    }
    L.total_ = L.chord_.first < L.chord_.second ? L.numeric_mass(L.chord_.first, L.chord_.second) : 0.0;
    return L;
  }

  /// mu({x : x.v >= r}) for a unit vector v.
  double halfspace_mass(std::span<const double> v, double r) const {
    if (r == kInf || is_zero()) return 0.0;
    if (r == -kInf) return total();
    if (auto g = gaussian_params()) {
      double mean = 0.0, var = 0.0;
      for (int i = 0; i < dim_; ++i) {
        mean += g->a[i] * v[i];
        var += v[i] * v[i] / (2.0 * g->c[i]);
      }
      return 0.5 * total() * std::erfc((r - mean) / std::sqrt(2.0 * var));
    }
    if (auto f = separable_factors()) {
      for (int k = 0; k < dim_; ++k) {
        if (std::abs(std::abs(v[k]) - 1.0) > 1e-15) continue;
        double rest = 1.0;
        for (int i = 0; i < dim_; ++i)
          if (i != k) rest *= (*f)[i].total();
        return rest * (v[k] > 0.0 ? (*f)[k].upper(r) : (*f)[k].cdf(-r));
      }
      // Integrate the other coordinates; the axis with the largest |v_k|
      // carries a closed-form CDF.
      int k = 0;
      for (int i = 1; i < dim_; ++i)
        if (std::abs(v[i]) > std::abs(v[k])) k = i;
      std::vector<double> lo, hi;
      for (int i = 0; i < dim_; ++i)
        if (i != k) {
          lo.push_back(box_.lo[i]);
          hi.push_back(box_.hi[i]);
        }
      const auto inner = [&](const double* y) {
        double weight = 1.0, s = r;
        for (int i = 0, j = 0; i < dim_; ++i) {
          if (i == k) continue;
          weight *= (*f)[i].eval(y[j]);
          s -= v[i] * y[j];
          ++j;
        }
        if (weight == 0.0) return 0.0;
        const double t = s / v[k];
        return weight * (v[k] > 0.0 ? (*f)[k].upper(t) : (*f)[k].cdf(t));
      };
      if (dim_ == 2)
        return quad::integrate([&](double y) { return inner(&y); }, lo[0], hi[0], 1e-11);
      return quad::integrate_box(inner, lo, hi, 16);
    }
    return integrate_fibers(v, [&](const LineRestriction& L) { return L.upper(r); });
  }

  /// Integral of per-fiber quantities over the base of the frame along v.
  /// The base range is the projection of the truncation box.
  double integrate_fibers(std::span<const double> v,
                          const std::function<double(const LineRestriction&)>& per_line) const {
    const Frame fr = Frame::along(v);
    std::vector<double> lo(dim_ - 1), hi(dim_ - 1);
    for (int j = 0, k = 0; j < dim_; ++j) {
      if (j == fr.axis()) continue;
      double a = 0.0, b = 0.0;
      for (int i = 0; i < dim_; ++i) {
        const double e = fr.e(j)[i];
        a += std::min(e * box_.lo[i], e * box_.hi[i]);
        b += std::max(e * box_.lo[i], e * box_.hi[i]);
      }
      lo[k] = a;
      hi[k] = b;
      ++k;
    }
    const auto fiber_value = [&](const double* z) {
      const auto o = fr.base_point({z, static_cast<std::size_t>(dim_ - 1)});
      return per_line(line(o, fr.fiber()));
    };
    if (dim_ == 1) return fiber_value(nullptr);
    if (dim_ == 2)
      return quad::integrate([&](double z) { return fiber_value(&z); }, lo[0], hi[0], 1e-10);
    return quad::integrate_box(fiber_value, lo, hi, 12);
  }

  /// Per-voxel masses mu(voxel) for a grid over (a sub-box of) the truncation
  /// box. Exact for separable kinds, trapezoid-free midpoint for grid kinds,
  /// 2^n-point Gauss otherwise. Cached per geometry.
  std::shared_ptr<const std::vector<double>> voxel_masses(const GridGeometry& g) const {
    const auto key = cache_key(g);
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = cache_->masses.find(key); it != cache_->masses.end()) return it->second;
    }
    auto masses = std::make_shared<std::vector<double>>(compute_voxel_masses(g));
    std::lock_guard lock(cache_->mutex);
    if (cache_->masses.size() > 16) cache_->masses.clear();
    cache_->masses.emplace(key, masses);
    return masses;
  }

  /// Masses of each axis-`axis` column of g below the box and above it,
  /// indexed by the column's voxel index with the axis coordinate set to 0.
  /// Non-zero only for separable kinds.
  std::pair<std::vector<double>, std::vector<double>> column_tails(const GridGeometry& g,
                                                                   int axis) const {
    std::vector<double> below(g.size(), 0.0), above(g.size(), 0.0);
    auto f = separable_factors();
    if (!f || std::holds_alternative<UniformWeight>(kind_)) return {below, above};
    const auto per_axis = axis_interval_masses(g, *f);
    const double lo_mass = (*f)[axis].cdf(g.box().lo[axis]);
    const double hi_mass = (*f)[axis].upper(g.box().hi[axis]);
    for (std::size_t lin = 0; lin < g.size(); ++lin) {
      const auto idx = g.unravel(lin);
      if (idx[axis] != 0) continue;
      double cross = 1.0;
      for (int i = 0; i < g.dim(); ++i)
        if (i != axis) cross *= per_axis[i][idx[i]];
      below[lin] = cross * lo_mass;
      above[lin] = cross * hi_mass;
    }
    return {below, above};
  }

 private:
  struct Cache {
    std::mutex mutex;
    std::map<std::vector<double>, std::shared_ptr<const std::vector<double>>> masses;
  };

  WeightedDensity(Kind kind, int n, const Options& opts, bool analytic_box = true)
      : kind_(std::move(kind)), dim_(n), tail_tol_(opts.tail_tol),
        cache_(std::make_shared<Cache>()) {
    require(opts.tail_tol > 0.0, ErrorCode::invalid_input, "tail_tol must be positive");
    std::optional<std::vector<Density1D>> f;
    if (analytic_box) f = separable_factors();
    if (f) {
      if (opts.box) {
        box_ = *opts.box;
        require(box_.dim() == n, ErrorCode::invalid_input, "box dimension mismatch");
      } else {
        box_ = auto_box(*f, opts.tail_tol);
      }
      double tot = 1.0, inside = 1.0;
      for (int i = 0; i < n; ++i) {
        tot *= (*f)[i].total();
        inside *= (*f)[i].mass(box_.lo[i], box_.hi[i]);
      }
      // Outside mass is tot - inside; bound it via the per-axis tails to
      // avoid cancellation.
      double bound = 0.0;
      for (int i = 0; i < n; ++i) {
        double rest = 1.0;
        for (int j = 0; j < n; ++j)
          if (j != i) rest *= (*f)[j].total();
        bound += rest * ((*f)[i].cdf(box_.lo[i]) + (*f)[i].upper(box_.hi[i]));
      }
      tail_bound_ = std::min(bound, std::max(0.0, tot - inside) + 1e-16 * tot);
      require(tail_bound_ <= tail_tol_, ErrorCode::invalid_input,
              "truncation box leaves more than tail_tol mass outside");
    } else {
      require(opts.box.has_value(), ErrorCode::invalid_input, "this density kind needs a box");
      box_ = *opts.box;
      require(box_.dim() == n, ErrorCode::invalid_input, "box dimension mismatch");
      tail_bound_ = 0.0;
    }
    for (int i = 0; i < n; ++i)
      require(box_.hi[i] > box_.lo[i], ErrorCode::invalid_input, "degenerate box");
  }

  /// Smallest cube, centred at the density centre with half-width a multiple
  /// of 1/2, whose certified outside mass is at most tol.
  static Box auto_box(const std::vector<Density1D>& f, double tol) {
    const int n = static_cast<int>(f.size());
    double R = 0.0;
    std::vector<double> center(n);
    for (int i = 0; i < n; ++i) {
      double rest = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != i) rest *= f[j].total();
      const double eps = tol / (2.0 * n * rest) * 0.999;
      const auto [s0, s1] = f[i].support();
      const double lo = std::isfinite(s0) ? s0 : f[i].quantile(eps);
      const double hi = std::isfinite(s1) ? s1 : f[i].upper_quantile(eps);
      center[i] = f[i].symmetry_center().value_or(0.5 * (lo + hi));
      R = std::max({R, center[i] - lo, hi - center[i]});
    }
    R = std::ceil(2.0 * R) / 2.0;
    return Box::cube(n, R, center);
  }


  static double bump_value(const Bump& b, const double* x) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < b.center.size(); ++i) {
      const double u = x[i] - b.center[i];
      r2 += u * u;
    }
    return std::exp(-0.5 * r2 / (b.width * b.width));
  }

  double bump_integral(const Perturbed& p) const {
    std::vector<double> lo(dim_), hi(dim_);
    for (int i = 0; i < dim_; ++i) {
      lo[i] = std::max(box_.lo[i], p.bump.center[i] - 9.0 * p.bump.width);
      hi[i] = std::min(box_.hi[i], p.bump.center[i] + 9.0 * p.bump.width);
      if (lo[i] >= hi[i]) return 0.0;
    }
    return p.bump.amplitude *
           quad::integrate_box(
               [&](const double* x) { return p.base->eval(x) * bump_value(p.bump, x); }, lo, hi,
               dim_ >= 3 ? 6 : 12);
  }

  static double trapezoid_total(const GridField& g) {
    const int n = g.dim();
    double acc = 0.0;
    for (std::size_t lin = 0; lin < g.samples.size(); ++lin) {
      std::size_t rem = lin;
      double w = 1.0;
      for (int a = n - 1; a >= 0; --a) {
        const int i = static_cast<int>(rem % g.dims[a]);
        rem /= g.dims[a];
        w *= g.spacing(a) * ((i == 0 || i == g.dims[a] - 1) ? 0.5 : 1.0);
      }
      acc += w * g.samples[lin];
    }
    return acc;
  }

  std::vector<double> cache_key(const GridGeometry& g) const {
    std::vector<double> key(g.box().lo);
    key.insert(key.end(), g.box().hi.begin(), g.box().hi.end());
    for (int d : g.dims()) key.push_back(d);
    return key;
  }

  static std::vector<std::vector<double>> axis_interval_masses(const GridGeometry& g,
                                                               const std::vector<Density1D>& f) {
    std::vector<std::vector<double>> out(g.dim());
    for (int a = 0; a < g.dim(); ++a) {
      out[a].resize(g.dims(a));
      for (int i = 0; i < g.dims(a); ++i) {
        const double lo = g.box().lo[a] + i * g.spacing(a);
        out[a][i] = f[a].mass(lo, lo + g.spacing(a));
      }
    }
    return out;
  }

  std::vector<double> compute_voxel_masses(const GridGeometry& g) const {
    require(g.dim() == dim_, ErrorCode::grid_mismatch, "grid dimension differs from density");
    std::vector<double> m(g.size(), 0.0);
    if (is_zero()) return m;
    if (auto f = separable_factors()) {
      const auto per_axis = axis_interval_masses(g, *f);
      parallel::for_each_index(g.size(), [&](std::size_t lin) {
        const auto idx = g.unravel(lin);
        double v = 1.0;
        for (int a = 0; a < g.dim(); ++a) v *= per_axis[a][idx[a]];
        m[lin] = v;
      });
      return m;
    }
    const double vol = g.voxel_volume();
    if (std::holds_alternative<GridSampled>(kind_)) {
      parallel::for_each_index(g.size(), [&](std::size_t lin) {
        double x[3];
        g.center(lin, x);
        m[lin] = eval(x) * vol;
      });
      return m;
    }
    const int n = g.dim();
    const int npts = 1 << n;
    parallel::for_each_index(g.size(), [&](std::size_t lin) {
      double c[3], x[3];
      g.center(lin, c);
      double acc = 0.0;
      for (int p = 0; p < npts; ++p) {
        for (int a = 0; a < n; ++a)
          x[a] = c[a] + (((p >> a) & 1) ? 0.5 : -0.5) * quad::kGauss2 * g.spacing(a);
        acc += eval(x);
      }
      m[lin] = acc / npts * vol;
    });
    return m;
  }

  Kind kind_;
  int dim_ = 0;
  Box box_;
  double tail_tol_ = 1e-9;
  double tail_bound_ = 0.0;
  std::shared_ptr<Cache> cache_;
};

inline double LineRestriction::eval(double t) const {
  switch (mode_) {
    case Mode::zero: return 0.0;
    case Mode::gaussian:
      return gauss_mass_ * root_a_ / std::sqrt(std::numbers::pi) *
             std::exp(-root_a_ * root_a_ * (t - t0_) * (t - t0_));
    case Mode::axis_factor: return coef_ * factor_.eval(offset_ + sign_ * t);
    case Mode::numeric: {
      double x[8];
      const int n = static_cast<int>(origin_.size());
      std::vector<double> heap;
      double* p = x;
      if (n > 8) {
        heap.resize(n);
        p = heap.data();
      }
      for (int i = 0; i < n; ++i) p[i] = origin_[i] + t * dir_[i];
      return density_->eval(p);
    }
  }
  return 0.0;
}

// ---- free-function interface ---------------------------------------------

inline double eval_density(const WeightedDensity& w, std::span<const double> x) { return w.eval(x); }

inline std::vector<double> eval_grad(const WeightedDensity& w, std::span<const double> x) {
  return w.grad(x);
}

inline LineRestriction fiber_line(const WeightedDensity& w, const Frame& frame,
                                  std::span<const double> xp) {
  require(frame.dim() == w.dim(), ErrorCode::invalid_input, "frame dimension mismatch");
  const auto o = frame.base_point(xp);
  return w.line(o, frame.fiber());
}

/// Integral of f over {xp + s e_axis : s <= t}.
inline double fiber_cdf(const WeightedDensity& w, const Frame& frame, std::span<const double> xp,
                        double t) {
  return fiber_line(w, frame, xp).cdf(t);
}

/// Smallest c with mass p on {xp + s e_axis : s >= c}.
inline double fiber_quantile(const WeightedDensity& w, const Frame& frame,
                             std::span<const double> xp, double p) {
  return fiber_line(w, frame, xp).quantile_upper(p);
}

inline MassReport total_mass(const WeightedDensity& w) { return w.total_mass(); }

}  // namespace ehrhard
