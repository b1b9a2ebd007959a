#pragma once

#include "isac/analysis.hpp"
#include "isac/beamform.hpp"
#include "isac/channel.hpp"
#include "isac/dirichlet.hpp"
#include "isac/experiment.hpp"
#include "isac/grid.hpp"
#include "isac/rng.hpp"
#include "isac/sensing.hpp"
#include "isac/specfun.hpp"
