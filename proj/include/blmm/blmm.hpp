#pragma once

// Umbrella header.

#include "blmm/abf.hpp"
#include "blmm/errors.hpp"
#include "blmm/fdr.hpp"
#include "blmm/finemap.hpp"
#include "blmm/kinship.hpp"
#include "blmm/lmm.hpp"
#include "blmm/math_util.hpp"
#include "blmm/matrix_io.hpp"
#include "blmm/oracle.hpp"
#include "blmm/parallel.hpp"
#include "blmm/priors.hpp"
#include "blmm/rng.hpp"
#include "blmm/settest.hpp"
#include "blmm/sim.hpp"
#include "blmm/types.hpp"
