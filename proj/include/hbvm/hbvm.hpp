#pragma once

#include "hbvm/error.hpp"
#include "hbvm/dense_matrix.hpp"
#include "hbvm/linalg.hpp"
#include "hbvm/legendre.hpp"
#include "hbvm/tableau.hpp"
#include "hbvm/splitting.hpp"
#include "hbvm/problems.hpp"
#include "hbvm/solvers.hpp"
#include "hbvm/integrator.hpp"
#include "hbvm/bench.hpp"
