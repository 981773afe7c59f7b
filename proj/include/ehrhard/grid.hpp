#pragma once

// Regular voxel grids over a truncation box, and node-sampled scalar fields.

#include "ehrhard/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ehrhard {

/// Cell-centred grid: voxel i spans [lo + i h, lo + (i+1) h] on each axis.
/// Storage is row-major with the last axis fastest.
class GridGeometry {
 public:
  GridGeometry() = default;
  GridGeometry(Box box, std::vector<int> dims) : box_(std::move(box)), dims_(std::move(dims)) {
    const int n = static_cast<int>(dims_.size());
    require(n >= 1 && n <= kMaxGridDim, ErrorCode::unsupported, "grids support dimensions 1 to 3");
    require(box_.dim() == n, ErrorCode::invalid_input, "box and dims disagree on dimension");
    h_.resize(n);
    for (int i = 0; i < n; ++i) {
      require(dims_[i] >= 1, ErrorCode::invalid_input, "grid dims must be positive");
      require(box_.extent(i) > 0.0, ErrorCode::invalid_input, "degenerate box");
      h_[i] = box_.extent(i) / dims_[i];
    }
    const auto [mn, mx] = std::minmax_element(h_.begin(), h_.end());
    require(*mx <= 1.01 * *mn, ErrorCode::invalid_input, "voxels must be cubes within 1%");
    strides_.assign(n, 1);
    for (int i = n - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * dims_[i + 1];
  }

  /// Grid over `box` with `res` voxels along the longest axis; other axes are
  /// sized to keep voxels cubic, and the box is widened symmetrically to fit.
  static GridGeometry cubic(const Box& box, int res) {
    require(res >= 1, ErrorCode::invalid_input, "resolution must be positive");
    const double h = box.max_extent() / res;
    Box b = box;
    std::vector<int> dims(box.dim());
    for (int i = 0; i < box.dim(); ++i) {
      dims[i] = std::max(1, static_cast<int>(std::ceil(box.extent(i) / h - 1e-9)));
      const double pad = 0.5 * (dims[i] * h - box.extent(i));
      b.lo[i] -= pad;
      b.hi[i] += pad;
    }
    return GridGeometry(std::move(b), std::move(dims));
  }

  int dim() const { return static_cast<int>(dims_.size()); }
  const Box& box() const { return box_; }
  const std::vector<int>& dims() const { return dims_; }
  int dims(int i) const { return dims_[i]; }
  double spacing(int i) const { return h_[i]; }
  const std::vector<double>& spacing() const { return h_; }
  double min_spacing() const { return *std::min_element(h_.begin(), h_.end()); }
  std::size_t stride(int i) const { return strides_[i]; }
  std::size_t size() const { return strides_.empty() ? 0 : strides_[0] * dims_[0]; }
  double voxel_volume() const {
    double v = 1.0;
    for (double x : h_) v *= x;
    return v;
  }

  std::array<int, 3> unravel(std::size_t lin) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int i = 0; i < dim(); ++i) {
      idx[i] = static_cast<int>(lin / strides_[i]);
      lin %= strides_[i];
    }
    return idx;
  }
  std::size_t ravel(const std::array<int, 3>& idx) const {
    std::size_t lin = 0;
    for (int i = 0; i < dim(); ++i) lin += static_cast<std::size_t>(idx[i]) * strides_[i];
    return lin;
  }
  double center(int axis, int i) const { return box_.lo[axis] + (i + 0.5) * h_[axis]; }
  void center(std::size_t lin, double* out) const {
    const auto idx = unravel(lin);
    for (int i = 0; i < dim(); ++i) out[i] = center(i, idx[i]);
  }

  /// Multilinear interpolation of a cell-centred field; coordinates outside
  /// the centre lattice clamp to the edge cells.
  double interpolate(const std::vector<double>& field, const double* x) const {
    int i0[3];
    double t[3];
    for (int a = 0; a < dim(); ++a) {
      double g = (x[a] - box_.lo[a]) / h_[a] - 0.5;
      if (dims_[a] == 1) {
        i0[a] = 0;
        t[a] = 0.0;
        continue;
      }
      g = std::clamp(g, 0.0, static_cast<double>(dims_[a] - 1));
      int i = static_cast<int>(g);
      if (i >= dims_[a] - 1) i = dims_[a] - 2;
      i0[a] = i;
      t[a] = g - i;
    }
    switch (dim()) {
      case 1: {
        const double* p = field.data() + i0[0];
        return t[0] == 0.0 ? p[0] : p[0] + t[0] * (p[1] - p[0]);
      }
      case 2: {
        const std::size_t s0 = strides_[0];
        const double* p = field.data() + i0[0] * s0 + i0[1];
        const double a = p[0] + t[1] * (p[1] - p[0]);
        const double b = dims_[0] == 1 ? a : p[s0] + t[1] * (p[s0 + 1] - p[s0]);
        return a + t[0] * (b - a);
      }
      default: {
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
          double wgt = 1.0;
          std::array<int, 3> idx{};
          bool skip = false;
          for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            if (bit && dims_[a] == 1) {
              skip = true;
              break;
            }
            idx[a] = i0[a] + bit;
            wgt *= bit ? t[a] : 1.0 - t[a];
          }
          if (skip || wgt == 0.0) continue;
          acc += wgt * field[ravel(idx)];
        }
        return acc;
      }
    }
  }

  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    return a.dims_ == b.dims_ && a.box_ == b.box_;
  }

 private:
  Box box_;
  std::vector<int> dims_;
  std::vector<double> h_;
  std::vector<std::size_t> strides_;
};

/// Samples on the nodes of a regular lattice spanning `box` (dims[i] nodes
/// per axis, row-major, last axis fastest), interpolated multilinearly.
struct GridField {
  Box box;
  std::vector<int> dims;
  std::vector<double> samples;

  int dim() const { return static_cast<int>(dims.size()); }
  double spacing(int i) const { return box.extent(i) / (dims[i] - 1); }

  void validate() const {
    const int n = dim();
    require(n >= 1 && n <= kMaxGridDim, ErrorCode::unsupported, "grid fields support 1 to 3 dims");
    require(box.dim() == n, ErrorCode::invalid_input, "grid field box dimension mismatch");
    std::size_t count = 1;
    for (int i = 0; i < n; ++i) {
      require(dims[i] >= 2, ErrorCode::invalid_input, "grid field needs two nodes per axis");
      require(box.extent(i) > 0.0, ErrorCode::invalid_input, "degenerate grid field box");
      count *= static_cast<std::size_t>(dims[i]);
    }
    require(samples.size() == count, ErrorCode::invalid_input, "grid field sample count mismatch");
    for (double s : samples)
      require(std::isfinite(s) && s >= 0.0, ErrorCode::invalid_input,
              "grid field samples must be finite and non-negative");
  }

  /// 0 outside the box.
  double eval(const double* x) const {
    const int n = dim();
    int i0[3];
    double t[3];
    for (int a = 0; a < n; ++a) {
      if (x[a] < box.lo[a] || x[a] > box.hi[a]) return 0.0;
      double g = (x[a] - box.lo[a]) / spacing(a);
      int i = std::min(static_cast<int>(g), dims[a] - 2);
      i0[a] = i;
      t[a] = g - i;
    }
    double acc = 0.0;
    for (int c = 0; c < (1 << n); ++c) {
      double wgt = 1.0;
      std::size_t lin = 0;
      for (int a = 0; a < n; ++a) {
        const int bit = (c >> a) & 1;
        wgt *= bit ? t[a] : 1.0 - t[a];
        lin = lin * dims[a] + (i0[a] + bit);
      }
      if (wgt != 0.0) acc += wgt * samples[lin];
    }
    return acc;
  }
};

}  // namespace ehrhard
