#pragma once

// One-dimensional densities with closed-form CDFs. They serve as product
// factors of n-dimensional weights and as inputs to the 1D PS criteria.

#include "ehrhard/core.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ehrhard {

/// scale * exp(-c (t - mean)^2)
struct Gaussian1D {
  double mean = 0.0;
  double c = 0.5;
  double scale = 1.0;
};

/// Logistic density exp(-z) / (1 + exp(-z))^2 / s with z = (t - location) / s.
struct Logistic1D {
  double location = 0.0;
  double s = 1.0;
};

/// rate * exp(-rate t) on t >= 0.
struct Exponential1D {
  double rate = 1.0;
};

/// exp(-(|t| - d)^2 / w): two bumps at +-d, even around 0.
struct Bimodal1D {
  double d = 3.0;
  double w = 0.1;
};

/// Sum of Gaussian bumps.
struct Mixture1D {
  std::vector<Gaussian1D> parts;
};

/// height on [lo, hi].
struct Uniform1D {
  double lo = 0.0;
  double hi = 1.0;
  double height = 1.0;
};

class Density1D {
 public:
  using Kind = std::variant<Gaussian1D, Logistic1D, Exponential1D, Bimodal1D, Mixture1D, Uniform1D>;

  Density1D() : kind_(Gaussian1D{}) {}
  Density1D(Kind kind) : kind_(kind) { validate(); }

  static Density1D standard_gaussian() {
    return Density1D(Gaussian1D{0.0, 0.5, 1.0 / std::sqrt(2.0 * std::numbers::pi)});
  }
  static Density1D logistic(double s = 1.0, double location = 0.0) {
    return Density1D(Logistic1D{location, s});
  }

  const Kind& kind() const { return kind_; }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>) return "gaussian";
          else if constexpr (std::is_same_v<K, Logistic1D>) return "logistic";
          else if constexpr (std::is_same_v<K, Exponential1D>) return "exponential";
          else if constexpr (std::is_same_v<K, Bimodal1D>) return "bimodal";
          else if constexpr (std::is_same_v<K, Mixture1D>) return "mixture";
          else return "uniform";
        },
        kind_);
  }

  double eval(double t) const {
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>) {
            const double u = t - k.mean;
            return k.scale * std::exp(-k.c * u * u);
          } else if constexpr (std::is_same_v<K, Logistic1D>) {
            const double e = std::exp(-std::abs((t - k.location) / k.s));
            return e / ((1.0 + e) * (1.0 + e)) / k.s;
          } else if constexpr (std::is_same_v<K, Exponential1D>) {
            return t < 0.0 ? 0.0 : k.rate * std::exp(-k.rate * t);
          } else if constexpr (std::is_same_v<K, Bimodal1D>) {
            const double u = std::abs(t) - k.d;
            return std::exp(-u * u / k.w);
          } else if constexpr (std::is_same_v<K, Mixture1D>) {
            double acc = 0.0;
            for (const auto& g : k.parts) acc += Density1D(g).eval(t);
            return acc;
          } else {
            return (t < k.lo || t > k.hi) ? 0.0 : k.height;
          }
        },
        kind_);
  }

  double derivative(double t) const {
    return std::visit(
        [this, t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>) {
            return -2.0 * k.c * (t - k.mean) * eval(t);
          } else if constexpr (std::is_same_v<K, Logistic1D>) {
            return -eval(t) * std::tanh(0.5 * (t - k.location) / k.s) / k.s;
          } else if constexpr (std::is_same_v<K, Exponential1D>) {
            return t < 0.0 ? 0.0 : -k.rate * eval(t);
          } else if constexpr (std::is_same_v<K, Bimodal1D>) {
            if (t == 0.0) return 0.0;
            const double sign = t > 0.0 ? 1.0 : -1.0;
            return -2.0 * (std::abs(t) - k.d) / k.w * sign * eval(t);
          } else if constexpr (std::is_same_v<K, Mixture1D>) {
            double acc = 0.0;
            for (const auto& g : k.parts) acc += Density1D(g).derivative(t);
            return acc;
          } else {
            return 0.0;
          }
        },
        kind_);
  }

  /// F(t) = integral of the density over (-inf, t].
  double cdf(double t) const {
    if (t == -kInf) return 0.0;
    if (t == kInf) return total();
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>) {
            const double rc = std::sqrt(k.c);
            return k.scale * std::sqrt(std::numbers::pi) / (2.0 * rc) *
                   std::erfc(-rc * (t - k.mean));
          } else if constexpr (std::is_same_v<K, Logistic1D>) {
            return 1.0 / (1.0 + std::exp(-(t - k.location) / k.s));
          } else if constexpr (std::is_same_v<K, Exponential1D>) {
            return t <= 0.0 ? 0.0 : -std::expm1(-k.rate * t);
          } else if constexpr (std::is_same_v<K, Bimodal1D>) {
            const double rw = std::sqrt(k.w);
            const double half = 0.5 * std::sqrt(std::numbers::pi * k.w);
            if (t < 0.0) return half * std::erfc(-(t + k.d) / rw);
            return half * std::erfc(-k.d / rw) +
                   half * (std::erf((t - k.d) / rw) + std::erf(k.d / rw));
          } else if constexpr (std::is_same_v<K, Mixture1D>) {
            double acc = 0.0;
            for (const auto& g : k.parts) acc += Density1D(g).cdf(t);
            return acc;
          } else {
            return k.height * (std::clamp(t, k.lo, k.hi) - k.lo);
          }
        },
        kind_);
  }

  /// total() - cdf(t), evaluated without cancellation in the right tail.
  double upper(double t) const {
    if (t == -kInf) return total();
    if (t == kInf) return 0.0;
    return std::visit(
        [this, t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>) {
            const double rc = std::sqrt(k.c);
            return k.scale * std::sqrt(std::numbers::pi) / (2.0 * rc) *
                   std::erfc(rc * (t - k.mean));
          } else if constexpr (std::is_same_v<K, Logistic1D>) {
            return 1.0 / (1.0 + std::exp((t - k.location) / k.s));
          } else if constexpr (std::is_same_v<K, Exponential1D>) {
            return t <= 0.0 ? 1.0 : std::exp(-k.rate * t);
          } else if constexpr (std::is_same_v<K, Bimodal1D>) {
            return cdf(-t);
          } else if constexpr (std::is_same_v<K, Mixture1D>) {
            double acc = 0.0;
            for (const auto& g : k.parts) acc += Density1D(g).upper(t);
            return acc;
          } else {
            return k.height * (k.hi - std::clamp(t, k.lo, k.hi));
          }
        },
        kind_);
  }

  /// Mass on [a, b], differenced on whichever side avoids cancellation.
  double mass(double a, double b) const {
    if (!(a < b)) return 0.0;
    const double cb = cdf(b), ua = upper(a);
    return cb < ua ? cb - cdf(a) : ua - upper(b);
  }

  double total() const {
    return std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>)
            return k.scale * std::sqrt(std::numbers::pi / k.c);
          else if constexpr (std::is_same_v<K, Logistic1D>) return 1.0;
          else if constexpr (std::is_same_v<K, Exponential1D>) return 1.0;
          else if constexpr (std::is_same_v<K, Bimodal1D>)
            return std::sqrt(std::numbers::pi * k.w) * (1.0 + std::erf(k.d / std::sqrt(k.w)));
          else if constexpr (std::is_same_v<K, Mixture1D>) {
            double acc = 0.0;
            for (const auto& g : k.parts) acc += Density1D(g).total();
            return acc;
          }
          else return k.height * (k.hi - k.lo);
        },
        kind_);
  }

  /// Closure of {t : f(t) > 0} as an extended-real interval.
  std::pair<double, double> support() const {
    if (std::holds_alternative<Exponential1D>(kind_)) return {0.0, kInf};
    if (const auto* u = std::get_if<Uniform1D>(&kind_)) return {u->lo, u->hi};
    return {-kInf, kInf};
  }

  std::optional<double> symmetry_center() const {
    if (const auto* g = std::get_if<Gaussian1D>(&kind_)) return g->mean;
    if (const auto* l = std::get_if<Logistic1D>(&kind_)) return l->location;
    if (std::holds_alternative<Bimodal1D>(kind_)) return 0.0;
    if (const auto* u = std::get_if<Uniform1D>(&kind_)) return 0.5 * (u->lo + u->hi);
    return std::nullopt;
  }

  /// Smallest t with F(t) >= p. p = 0 gives the left end of the support and
  /// p = total() the right end.
  double quantile(double p) const {
    const double tot = total();
    require(p >= -1e-15 * tot && p <= tot * (1.0 + 1e-12), ErrorCode::out_of_range,
            "quantile mass outside [0, total]");
    const auto [lo_s, hi_s] = support();
    if (p <= 0.0) return lo_s;
    if (p >= tot) return hi_s;
    if (const auto* l = std::get_if<Logistic1D>(&kind_))
      return l->location + l->s * std::log(p / (1.0 - p));
    if (const auto* g = std::get_if<Gaussian1D>(&kind_)) {
      // F(t) = T/2 erfc(-sqrt(c)(t - mean))
      const double x = 2.0 * p / tot;
      return g->mean - boost::math::erfc_inv(x) / std::sqrt(g->c);
    }
    if (const auto* e = std::get_if<Exponential1D>(&kind_)) return -std::log1p(-p) / e->rate;
    if (const auto* u = std::get_if<Uniform1D>(&kind_)) return u->lo + p / u->height;
    double lo = -1.0, hi = 1.0;
    while (cdf(lo) >= p) lo *= 2.0;
    while (cdf(hi) < p) hi *= 2.0;
    return bisect_first_true(lo, hi, [&](double t) { return cdf(t) >= p; });
  }

  /// Smallest t with upper(t) <= p; accurate for tiny p in the right tail.
  double upper_quantile(double p) const {
    const double tot = total();
    const auto [lo_s, hi_s] = support();
    if (p <= 0.0) return hi_s;
    if (p >= tot) return lo_s;
    if (const auto* l = std::get_if<Logistic1D>(&kind_))
      return l->location + l->s * std::log((1.0 - p) / p);
    if (const auto* g = std::get_if<Gaussian1D>(&kind_))
      return g->mean + boost::math::erfc_inv(2.0 * p / tot) / std::sqrt(g->c);
    if (const auto* e = std::get_if<Exponential1D>(&kind_)) return -std::log(p) / e->rate;
    double lo = -1.0, hi = 1.0;
    while (upper(lo) <= p) lo = 2.0 * lo - 1.0;
    while (upper(hi) > p) hi = 2.0 * hi + 1.0;
    return bisect_first_true(lo, hi, [&](double t) { return upper(t) <= p; });
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Gaussian1D>)
            require(k.c > 0.0 && k.scale >= 0.0, ErrorCode::invalid_input, "gaussian needs c > 0");
          else if constexpr (std::is_same_v<K, Logistic1D>)
            require(k.s > 0.0, ErrorCode::invalid_input, "logistic scale must be positive");
          else if constexpr (std::is_same_v<K, Exponential1D>)
            require(k.rate > 0.0, ErrorCode::invalid_input, "exponential rate must be positive");
          else if constexpr (std::is_same_v<K, Bimodal1D>)
            require(k.w > 0.0, ErrorCode::invalid_input, "bimodal width must be positive");
          else if constexpr (std::is_same_v<K, Mixture1D>) {
            require(!k.parts.empty(), ErrorCode::invalid_input, "mixture needs at least one part");
            for (const auto& g : k.parts)
              require(g.c > 0.0 && g.scale >= 0.0, ErrorCode::invalid_input, "gaussian needs c > 0");
          } else
            require(k.hi > k.lo && k.height >= 0.0, ErrorCode::invalid_input, "bad uniform");
        },
        kind_);
  }

  Kind kind_;
};

}  // namespace ehrhard
