#pragma once

#include "smloc/cloud_io.hpp"
#include "smloc/config.hpp"
#include "smloc/filters.hpp"
#include "smloc/harness.hpp"
#include "smloc/icp.hpp"
#include "smloc/liegroup.hpp"
#include "smloc/parallel.hpp"
#include "smloc/pointcloud.hpp"
#include "smloc/report.hpp"
#include "smloc/scenario.hpp"
#include "smloc/sim.hpp"
#include "smloc/textio.hpp"
