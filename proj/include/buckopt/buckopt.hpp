#pragma once

// Convenience umbrella; every header below is standalone.

#include "buckopt/continuation.hpp"
#include "buckopt/errors.hpp"
#include "buckopt/gaussian.hpp"
#include "buckopt/generators.hpp"
#include "buckopt/gp.hpp"
#include "buckopt/io.hpp"
#include "buckopt/linalg.hpp"
#include "buckopt/local_search.hpp"
#include "buckopt/log.hpp"
#include "buckopt/model.hpp"
#include "buckopt/optimizer.hpp"
#include "buckopt/sampling.hpp"
#include "buckopt/sobol.hpp"
#include "buckopt/stability.hpp"
