// Weighted perimeter of half-planes under the standard Gaussian: the grid
// estimators against the closed form, at a few resolutions.

#include "ehrhard/perimeter.hpp"

#include <cstdio>

using namespace ehrhard;

int main() {
  const auto w = WeightedDensity::standard_gaussian(2);
  const std::vector<double> v{std::cos(0.4), std::sin(0.4)};
  const double exact = perimeter_halfspace(w, HalfSpace{v, 0.3}).value;
  std::printf("closed form %.8f\n", exact);
  for (int res : {64, 128, 256, 512}) {
    const auto E = rasterize(Region::half_space(v, 0.3), w, res);
    const auto bv = perimeter_bv(w, E);
    const auto mk = perimeter_minkowski(w, E);
    std::printf("res %4d  bv %.8f (budget %.1e)  minkowski %.8f (budget %.1e)\n", res, bv.value, bv.error_budget,
                mk.value, mk.error_budget);
  }
}
