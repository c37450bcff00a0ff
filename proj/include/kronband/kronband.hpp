// Umbrella header.
#pragma once

#include "kronband/core.hpp"
#include "kronband/rng.hpp"
#include "kronband/io.hpp"
#include "kronband/config.hpp"
#include "kronband/simulate.hpp"
#include "kronband/covariance.hpp"
#include "kronband/regularize.hpp"
#include "kronband/nkp.hpp"
#include "kronband/tuning.hpp"
#include "kronband/bench.hpp"
