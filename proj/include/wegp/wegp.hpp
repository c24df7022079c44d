#pragma once

// Gaussian-process regression and Bayesian optimization for mixed
// continuous/categorical inputs, with categorical correlation learned as a
// non-negatively weighted sum of base Euclidean distance matrices.

#include "wegp/bench.hpp"
#include "wegp/bo.hpp"
#include "wegp/edm.hpp"
#include "wegp/errors.hpp"
#include "wegp/experiment.hpp"
#include "wegp/gp.hpp"
#include "wegp/inference.hpp"
#include "wegp/kernel.hpp"
#include "wegp/nnls.hpp"
#include "wegp/nuts.hpp"
#include "wegp/rng.hpp"
