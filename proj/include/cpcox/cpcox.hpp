#pragma once

#include "cpcox/bootstrap.hpp"
#include "cpcox/data.hpp"
#include "cpcox/estimators.hpp"
#include "cpcox/harness.hpp"
#include "cpcox/likelihood.hpp"
#include "cpcox/limit_law.hpp"
#include "cpcox/linalg.hpp"
#include "cpcox/rng.hpp"
#include "cpcox/simulate.hpp"
#include "cpcox/stats.hpp"
