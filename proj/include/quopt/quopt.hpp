#pragma once

#include "quopt/demod.hpp"
#include "quopt/error.hpp"
#include "quopt/interferometer.hpp"
#include "quopt/io.hpp"
#include "quopt/metrics.hpp"
#include "quopt/phantom.hpp"
#include "quopt/pipeline.hpp"
#include "quopt/projection.hpp"
#include "quopt/tomo.hpp"
