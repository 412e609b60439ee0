#pragma once

#include "config.hpp"
#include "environment.hpp"
#include "external_env.hpp"
#include "filerag_env.hpp"
#include "loop.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"
#include "rng.hpp"
#include "scheduler.hpp"
#include "seeding.hpp"
#include "sobol.hpp"
#include "space.hpp"
#include "stats.hpp"
#include "synthetic_env.hpp"
