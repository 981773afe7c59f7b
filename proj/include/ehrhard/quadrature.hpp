#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace ehrhard::quad {

inline constexpr double kRelTol = 1e-12;

/// Adaptive 15-point Gauss-Kronrod on [a, b]; infinite limits are allowed.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = kRelTol, double* error = nullptr) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a, rel_tol, error);
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, 20, rel_tol, &err);
  if (error) *error = err;
  return value;
}

/// Two-point Gauss-Legendre nodes on [-1, 1].
inline constexpr double kGauss2 = 0.57735026918962576451;

/// 20-point Gauss-Legendre on each of `pieces` equal subintervals.
template <class F>
double composite_gauss(F&& f, double a, double b, int pieces) {
  if (a == b) return 0.0;
  const double step = (b - a) / pieces;
  double acc = 0.0;
  for (int k = 0; k < pieces; ++k)
    acc += boost::math::quadrature::gauss<double, 20>::integrate(f, a + k * step, a + (k + 1) * step);
  return acc;
}

/// Tensor composite Gauss-Legendre over the box [lo, hi] (dimension lo.size()).
inline double integrate_box(const std::function<double(const double*)>& f,
                            const std::vector<double>& lo, const std::vector<double>& hi,
                            int pieces) {
  const int n = static_cast<int>(lo.size());
  std::vector<double> x(n);
  std::function<double(int)> level = [&](int axis) -> double {
    if (axis == n) return f(x.data());
    return composite_gauss(
        [&](double t) {
          x[axis] = t;
          return level(axis + 1);
        },
        lo[axis], hi[axis], pieces);
  };
  return level(0);
}

}  // namespace ehrhard::quad
