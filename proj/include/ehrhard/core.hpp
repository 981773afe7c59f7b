#pragma once

// Shared primitives: error type, extended reals, deterministic reductions and
// the fiber-parallel loop used by every grid operation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ehrhard {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr int kMaxGridDim = 3;

enum class ErrorCode {
  invalid_input,
  unsupported,
  out_of_range,
  empty_region,
  grid_mismatch,
  resolution_insufficient,
  no_boundary,
  nonconvergent,
  infinite_height,
  already_converged,
  no_density_pair,
  not_even,
  io_error,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::empty_region: return "empty_region";
    case ErrorCode::grid_mismatch: return "grid_mismatch";
    case ErrorCode::resolution_insufficient: return "resolution_insufficient";
    case ErrorCode::no_boundary: return "no_boundary";
    case ErrorCode::nonconvergent: return "nonconvergent";
    case ErrorCode::infinite_height: return "infinite_height";
    case ErrorCode::already_converged: return "already_converged";
    case ErrorCode::no_density_pair: return "no_density_pair";
    case ErrorCode::not_even: return "not_even";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

/// Axis-aligned box [lo_0,hi_0] x ... x [lo_{n-1},hi_{n-1}].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double extent(int i) const { return hi[i] - lo[i]; }
  bool contains(std::span<const double> x) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }
  double max_extent() const {
    double m = 0.0;
    for (int i = 0; i < dim(); ++i) m = std::max(m, extent(i));
    return m;
  }
  static Box cube(int n, double half_width, std::span<const double> center = {}) {
    Box b;
    b.lo.assign(n, -half_width);
    b.hi.assign(n, half_width);
    if (!center.empty())
      for (int i = 0; i < n; ++i) {
        b.lo[i] += center[i];
        b.hi[i] += center[i];
      }
    return b;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline std::vector<double> normalized(std::span<const double> a) {
  const double len = norm(a);
  require(len > 0.0, ErrorCode::invalid_input, "zero-length direction");
  std::vector<double> out(a.begin(), a.end());
  for (double& x : out) x /= len;
  return out;
}

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is bit-identical for identical inputs.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 32) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

namespace parallel {

inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> threads{1};
  return threads;
}

inline void set_thread_count(unsigned n) { thread_setting().store(std::max(1u, n)); }
inline unsigned thread_count() { return thread_setting().load(); }

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks; bodies
/// must only write to disjoint locations, so results never depend on the
/// thread count.
template <class Body>
void for_each_index(std::size_t n, Body&& body) {
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// Deterministic sum of term(i) over [0, n): terms are materialized and
/// reduced with pairwise_sum.
template <class Term>
double sum(std::size_t n, Term&& term) {
  std::vector<double> terms(n);
  for_each_index(n, [&](std::size_t i) { terms[i] = term(i); });
  return pairwise_sum(terms);
}

}  // namespace parallel

/// Smallest x in [lo, hi] with pred(x) true, assuming pred is monotone
/// (false ... false true ... true). Returns hi if pred is never true before hi.
template <class Pred>
double bisect_first_true(double lo, double hi, Pred&& pred, int max_iter = 200) {
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace ehrhard
