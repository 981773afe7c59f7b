#pragma once

// Closed-form reference values computed without the library.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi); }
inline double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Inverse of Phi by bisection.
inline double Phi_inv(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 64; ++i) {
    const double mid = 0.5 * (lo + hi);
    (Phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Per of {x.v >= r} under C exp(-c|x - a|^2) normalized to mass 1; the
/// projection x.v is N(a.v, 1/(2c)).
inline double gaussian_halfspace_perimeter(double c, const std::vector<double>& v, double r,
                                           const std::vector<double>& a = {}) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m += a[i] * v[i];
  const double s = std::sqrt(1.0 / (2.0 * c));
  return phi((r - m) / s) / s;
}

inline double gaussian_halfspace_mass(double c, const std::vector<double>& v, double r,
                                      const std::vector<double>& a = {}) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m += a[i] * v[i];
  return 1.0 - Phi((r - m) * std::sqrt(2.0 * c));
}

/// Standard 2D Gaussian, centred disc of radius R.
inline double gaussian_disc_mass(double R) { return 1.0 - std::exp(-0.5 * R * R); }
inline double gaussian_disc_perimeter(double R) { return R * std::exp(-0.5 * R * R); }

inline double logistic_pdf(double t, double s = 1.0) {
  const double e = std::exp(-std::abs(t) / s);
  return e / (s * (1.0 + e) * (1.0 + e));
}
inline double logistic_cdf(double t, double s = 1.0) { return 1.0 / (1.0 + std::exp(-t / s)); }

/// Gaussian isoperimetric profile phi(Phi^{-1}(p)).
inline double gaussian_profile(double p) { return p <= 0.0 || p >= 1.0 ? 0.0 : phi(Phi_inv(p)); }

/// Logistic isoperimetric profile p(1 - p), unit scale.
inline double logistic_profile(double p) { return p * (1.0 - p); }

/// Column of the standard 2D Gaussian at abscissa x through the disc of
/// radius R centred at (x0, y0): the height c of the equal-mass half-line
/// {y >= c}. Returns +inf when the column misses the disc.
inline double disc_symmetrized_height(double x, double x0, double y0, double R) {
  const double dx = x - x0;
  if (std::abs(dx) >= R) return INFINITY;
  const double half = std::sqrt(R * R - dx * dx);
  const double m = Phi(y0 + half) - Phi(y0 - half);
  return Phi_inv(1.0 - m);
}

/// log-derivative of exp(-sum c_i x_i^2) along u at x.
inline double anisotropic_K(const std::vector<double>& c, const std::vector<double>& x,
                            std::span<const double> u) {
  double k = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) k += -2.0 * c[i] * x[i] * u[i];
  return k;
}

inline double anisotropic_f(const std::vector<double>& c, const std::vector<double>& x) {
  double q = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) q += c[i] * x[i] * x[i];
  return std::exp(-q);
}

}  // namespace oracle
