#pragma once

// Extended-real height functions over a regular base grid. A HeightField with
// frame axis u encodes the subgraph {x : x.u <= h(z)}, z the base coordinates.

#include "ehrhard/weights.hpp"

namespace ehrhard {

struct HeightField {
  Frame frame;                  // fiber axis = up direction
  std::vector<double> origin;   // base coordinate of the first cell centre, per base axis
  std::vector<double> spacing;  // per base axis
  std::vector<int> dims;        // per base axis (n-1 entries)
  std::vector<double> values;   // row-major, last base axis fastest; +-inf allowed

  /// Cell-centred base grid covering [lo_k, hi_k] with dims[k] cells.
  static HeightField over(Frame frame, const std::vector<double>& lo, const std::vector<double>& hi,
                          std::vector<int> dims, double fill = 0.0) {
    HeightField g;
    const int m = frame.dim() - 1;
    require(static_cast<int>(lo.size()) == m && static_cast<int>(hi.size()) == m &&
                static_cast<int>(dims.size()) == m,
            ErrorCode::invalid_input, "height field base needs n-1 axes");
    g.frame = std::move(frame);
    std::size_t count = 1;
    for (int k = 0; k < m; ++k) {
      require(dims[k] >= 1 && hi[k] > lo[k], ErrorCode::invalid_input, "bad height field base");
      g.spacing.push_back((hi[k] - lo[k]) / dims[k]);
      g.origin.push_back(lo[k] + 0.5 * g.spacing.back());
      count *= static_cast<std::size_t>(dims[k]);
    }
    g.dims = std::move(dims);
    g.values.assign(count, fill);
    return g;
  }

  int dim() const { return frame.dim(); }
  int base_dim() const { return dim() - 1; }
  std::span<const double> up() const { return frame.fiber(); }
  std::size_t size() const { return values.size(); }

  /// Base coordinates of cell `lin`.
  std::vector<double> cell_center(std::size_t lin) const {
    std::vector<double> z(base_dim());
    for (int k = base_dim() - 1; k >= 0; --k) {
      z[k] = origin[k] + static_cast<double>(lin % dims[k]) * spacing[k];
      lin /= dims[k];
    }
    return z;
  }

  /// Multilinear interpolation in the base; when a neighbouring value is
  /// infinite the nearest cell's value is used. Clamped outside the grid.
  double interpolate(const double* z) const {
    const int m = base_dim();
    if (m == 0) return values[0];
    int i0[2];
    double t[2];
    for (int k = 0; k < m; ++k) {
      double g = (z[k] - origin[k]) / spacing[k];
      if (dims[k] == 1) {
        i0[k] = 0;
        t[k] = 0.0;
        continue;
      }
      g = std::clamp(g, 0.0, static_cast<double>(dims[k] - 1));
      int i = std::min(static_cast<int>(g), dims[k] - 2);
      i0[k] = i;
      t[k] = g - i;
    }
    if (m == 1) {
      const double a = values[i0[0]];
      if (t[0] == 0.0) return a;
      const double b = values[i0[0] + 1];
      if (!std::isfinite(a) || !std::isfinite(b)) return t[0] < 0.5 ? a : b;
      return a + t[0] * (b - a);
    }
    const std::size_t s = static_cast<std::size_t>(dims[1]);
    const int j1 = dims[1] == 1 ? 0 : 1;
    const int k1 = dims[0] == 1 ? 0 : 1;
    const double v00 = values[i0[0] * s + i0[1]];
    const double v01 = values[i0[0] * s + i0[1] + j1];
    const double v10 = values[(i0[0] + k1) * s + i0[1]];
    const double v11 = values[(i0[0] + k1) * s + i0[1] + j1];
    if (!std::isfinite(v00) || !std::isfinite(v01) || !std::isfinite(v10) || !std::isfinite(v11)) {
      const bool a = t[0] >= 0.5, b = t[1] >= 0.5;
      return a ? (b ? v11 : v10) : (b ? v01 : v00);
    }
    const double lo = v00 + t[1] * (v01 - v00);
    const double hi = v10 + t[1] * (v11 - v10);
    return lo + t[0] * (hi - lo);
  }

  /// Bounds on interpolate() over the base rectangle [lo, hi]: min and max
  /// over every node that any interpolation inside it can touch.
  std::pair<double, double> range(const double* lo, const double* hi) const {
    const int m = base_dim();
    if (m == 0) return {values[0], values[0]};
    int a[2] = {0, 0}, b[2] = {0, 0};
    for (int k = 0; k < m; ++k) {
      const double top = static_cast<double>(dims[k] - 1);
      const double gl = std::clamp((lo[k] - origin[k]) / spacing[k], 0.0, top);
      const double gh = std::clamp((hi[k] - origin[k]) / spacing[k], 0.0, top);
      a[k] = static_cast<int>(std::floor(gl));
      b[k] = std::min(static_cast<int>(std::ceil(gh)), dims[k] - 1);
    }
    double mn = kInf, mx = -kInf;
    const std::size_t s = m == 2 ? static_cast<std::size_t>(dims[1]) : 1;
    for (int i = a[0]; i <= b[0]; ++i)
      for (int j = a[1]; j <= b[1]; ++j) {
        const double v = values[i * s + j];
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
    return {mn, mx};
  }

  bool contains(const double* x) const {
    const int n = dim();
    const std::span<const double> xs(x, static_cast<std::size_t>(n));
    double z[2] = {0.0, 0.0};
    for (int j = 0, k = 0; j < n; ++j) {
      if (j == frame.axis()) continue;
      z[k++] = dot(xs, frame.e(j));
    }
    return dot(xs, up()) <= interpolate(z);
  }
};

}  // namespace ehrhard
