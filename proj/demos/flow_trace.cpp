// Hole-filling flow: a half-plane with a hole plus a displaced blob of equal
// mass, driven to the half-plane. Prints the step trace as CSV.

#include "ehrhard/flow.hpp"

#include <iostream>

using namespace ehrhard;

int main() {
  const auto w = WeightedDensity::standard_gaussian(2);
  const auto g = density_grid(w, 256);
  const auto E = rasterize((Region::half_space({1.0, 0.0}, 0.0) - Region::ball({1.0, 1.0}, 0.4)) |
                               Region::ball({-1.0, -1.0}, 0.33),
                           g);
  const auto tr = flow_to_halfspace(w, E, std::vector<double>{1.0, 0.0});
  tr.write_csv(std::cout);
  std::cerr << "status " << to_string(tr.status) << ", mu(F delta H) " << tr.initial_symm_diff << " -> "
            << (tr.steps.empty() ? tr.initial_symm_diff : tr.steps.back().symm_diff) << "\n";
}
