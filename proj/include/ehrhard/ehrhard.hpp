#pragma once

// Everything: weights, sets, symmetrization, perimeters, flow, analysis, io.

#include "ehrhard/analysis.hpp"
#include "ehrhard/flow.hpp"
#include "ehrhard/io.hpp"
#include "ehrhard/perimeter.hpp"
#include "ehrhard/symmetrize.hpp"
