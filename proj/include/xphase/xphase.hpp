#pragma once

// Umbrella header: the full unbalanced-feeder simulation and reactive-power
// control toolkit.

#include "xphase/carson.hpp"
#include "xphase/control.hpp"
#include "xphase/error.hpp"
#include "xphase/feeder_io.hpp"
#include "xphase/model.hpp"
#include "xphase/report.hpp"
#include "xphase/sensitivity.hpp"
#include "xphase/simplex.hpp"
#include "xphase/solver.hpp"
#include "xphase/version.hpp"
