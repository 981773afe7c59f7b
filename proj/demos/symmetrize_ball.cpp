// Symmetrizes an off-centre disc under the standard Gaussian in several
// directions and prints mass and perimeter before and after.

#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"

#include <cstdio>

using namespace ehrhard;

int main() {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto E = rasterize(Region::ball({0.6, 0.2}, 0.9), w, 256);
  const auto pE = perimeter_bv(w, E);
  std::printf("mu(E) %.6f  Per(E) %.6f\n", mu_measure(w, E), pE.value);
  for (int k = 0; k < 6; ++k) {
    const double th = 2.0 * std::numbers::pi * k / 6;
    const std::vector<double> v{std::cos(th), std::sin(th)};
    const auto r = symmetrize_detailed(w, E, v);
    const auto pS = perimeter_bv(w, r.set);
    std::printf("theta %.3f  mu(S) %.6f  Per(S) %.6f  change %+.2e (budget %.1e)\n", th, r.mass_after, pS.value,
                pS.value - pE.value, pE.error_budget + pS.error_budget);
  }
}
