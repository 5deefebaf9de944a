#pragma once

#include "lmcf/types.hpp"
#include "lmcf/error.hpp"
#include "lmcf/log.hpp"
#include "lmcf/parallel.hpp"
#include "lmcf/grid.hpp"
#include "lmcf/field_io.hpp"
#include "lmcf/polynomial.hpp"
#include "lmcf/geometry.hpp"
#include "lmcf/phase.hpp"
#include "lmcf/oracle1d.hpp"
#include "lmcf/solver.hpp"
#include "lmcf/verify.hpp"
#include "lmcf/rotation.hpp"
#include "lmcf/inequalities.hpp"
#include "lmcf/experiments.hpp"
