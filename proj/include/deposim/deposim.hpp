#pragma once

#include "bricklayer.hpp"
#include "coupling.hpp"
#include "dynamics.hpp"
#include "equilibrium.hpp"
#include "estimators.hpp"
#include "experiment.hpp"
#include "models.hpp"
#include "oracle.hpp"
#include "rate_tree.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "version.hpp"
