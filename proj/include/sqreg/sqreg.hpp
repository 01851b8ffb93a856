#pragma once

#include "sqreg/algorithms.hpp"
#include "sqreg/analysis.hpp"
#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"
#include "sqreg/harness.hpp"
#include "sqreg/hermite.hpp"
#include "sqreg/instances.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/oracles.hpp"
#include "sqreg/query.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"
#include "sqreg/testing_params.hpp"
