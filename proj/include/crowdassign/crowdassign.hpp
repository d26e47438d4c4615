#pragma once

// Umbrella header for the crowd-assignment library.

#include "crowdassign/anchors.hpp"
#include "crowdassign/assign.hpp"
#include "crowdassign/cli.hpp"
#include "crowdassign/config.hpp"
#include "crowdassign/dataset.hpp"
#include "crowdassign/geometry.hpp"
#include "crowdassign/losses.hpp"
#include "crowdassign/metrics.hpp"
#include "crowdassign/parallel.hpp"
#include "crowdassign/report.hpp"
#include "crowdassign/rng.hpp"
#include "crowdassign/scene.hpp"
