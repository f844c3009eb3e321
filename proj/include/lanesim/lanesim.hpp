#pragma once

#include "lanesim/common.hpp"
#include "lanesim/config.hpp"
#include "lanesim/demand.hpp"
#include "lanesim/dynamics.hpp"
#include "lanesim/engine.hpp"
#include "lanesim/metrics.hpp"
#include "lanesim/network.hpp"
#include "lanesim/outputs.hpp"
#include "lanesim/report.hpp"
#include "lanesim/routing.hpp"
#include "lanesim/sweep.hpp"
