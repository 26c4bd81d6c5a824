#pragma once

#include "mfgdc/commands.hpp"
#include "mfgdc/config.hpp"
#include "mfgdc/duality.hpp"
#include "mfgdc/field_io.hpp"
#include "mfgdc/flows.hpp"
#include "mfgdc/functionals.hpp"
#include "mfgdc/geodesic.hpp"
#include "mfgdc/grid.hpp"
#include "mfgdc/model.hpp"
#include "mfgdc/parallel.hpp"
#include "mfgdc/prox.hpp"
#include "mfgdc/solution_io.hpp"
#include "mfgdc/solver.hpp"
#include "mfgdc/spacetime_operator.hpp"
#include "mfgdc/test_problems.hpp"
