#pragma once

#include "pdldp/builtin_specs.hpp"
#include "pdldp/coefficients.hpp"
#include "pdldp/config.hpp"
#include "pdldp/errors.hpp"
#include "pdldp/experiment.hpp"
#include "pdldp/grid.hpp"
#include "pdldp/mc_verify.hpp"
#include "pdldp/optimize.hpp"
#include "pdldp/rate_fn.hpp"
#include "pdldp/rng.hpp"
#include "pdldp/sde_sim.hpp"
#include "pdldp/skeleton.hpp"
#include "pdldp/small_time.hpp"
