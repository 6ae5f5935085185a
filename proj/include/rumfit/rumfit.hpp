#pragma once

#include "rumfit/efdist.hpp"
#include "rumfit/error.hpp"
#include "rumfit/eval.hpp"
#include "rumfit/gibbs.hpp"
#include "rumfit/mcem.hpp"
#include "rumfit/parallel.hpp"
#include "rumfit/pl.hpp"
#include "rumfit/prefdata.hpp"
#include "rumfit/rng.hpp"
#include "rumfit/special.hpp"
#include "rumfit/version.hpp"
