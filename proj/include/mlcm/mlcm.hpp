#pragma once

#include "mlcm/core.hpp"
#include "mlcm/csv.hpp"
#include "mlcm/diagnostics.hpp"
#include "mlcm/heterogeneity.hpp"
#include "mlcm/inference.hpp"
#include "mlcm/learners.hpp"
#include "mlcm/panel_cv.hpp"
#include "mlcm/panel_data.hpp"
#include "mlcm/pipeline.hpp"
#include "mlcm/simulation.hpp"
