#pragma once

#include "sight/adapter.hpp"
#include "sight/baselines.hpp"
#include "sight/bench.hpp"
#include "sight/config.hpp"
#include "sight/config_io.hpp"
#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/io.hpp"
#include "sight/manifest.hpp"
#include "sight/matrix.hpp"
#include "sight/metrics.hpp"
#include "sight/plotdata.hpp"
#include "sight/record.hpp"
#include "sight/reports.hpp"
#include "sight/rng.hpp"
#include "sight/runner.hpp"
#include "sight/simulator.hpp"
