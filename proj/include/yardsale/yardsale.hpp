#pragma once

// Umbrella header for the numerical library. The command-line layer
// (yardsale/io.hpp, yardsale/cli.hpp) additionally needs CLI11 and
// nlohmann/json and is not included here.

#include "yardsale/errors.hpp"
#include "yardsale/domain.hpp"
#include "yardsale/rng.hpp"
#include "yardsale/monte_carlo.hpp"
#include "yardsale/fokker_planck.hpp"
#include "yardsale/steady_state.hpp"
#include "yardsale/analysis.hpp"
