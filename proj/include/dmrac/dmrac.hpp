#pragma once

#include "dmrac/adaptive.hpp"
#include "dmrac/dde.hpp"
#include "dmrac/errors.hpp"
#include "dmrac/harness.hpp"
#include "dmrac/numerics.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/reference.hpp"
#include "dmrac/scenario_io.hpp"
#include "dmrac/topology.hpp"
