#pragma once

#include "fwtrack/affinity.hpp"
#include "fwtrack/error.hpp"
#include "fwtrack/fw_solver.hpp"
#include "fwtrack/graph.hpp"
#include "fwtrack/hierarchy.hpp"
#include "fwtrack/io.hpp"
#include "fwtrack/metrics.hpp"
#include "fwtrack/oracles.hpp"
#include "fwtrack/pipeline.hpp"
#include "fwtrack/synth.hpp"
#include "fwtrack/trajectory.hpp"
