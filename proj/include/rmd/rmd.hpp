#pragma once

// Convenience header for the numerical library. rmd/io.hpp is separate
// because it pulls in nlohmann/json.

#include "rmd/dist.hpp"
#include "rmd/entry_game.hpp"
#include "rmd/errors.hpp"
#include "rmd/harness.hpp"
#include "rmd/inference.hpp"
#include "rmd/linalg.hpp"
#include "rmd/linear_gaussian.hpp"
#include "rmd/model.hpp"
#include "rmd/power.hpp"
#include "rmd/random.hpp"
#include "rmd/smm_toy.hpp"
#include "rmd/solver.hpp"
