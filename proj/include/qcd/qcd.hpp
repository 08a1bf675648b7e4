#pragma once

#include "qcd/audit.hpp"
#include "qcd/calibration.hpp"
#include "qcd/config.hpp"
#include "qcd/csv.hpp"
#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"
#include "qcd/experiment.hpp"
#include "qcd/innovation.hpp"
#include "qcd/model.hpp"
#include "qcd/models/scalar.hpp"
#include "qcd/models/vector.hpp"
#include "qcd/parallel.hpp"
#include "qcd/quadrature.hpp"
#include "qcd/risk.hpp"
#include "qcd/rng.hpp"
#include "qcd/state.hpp"
#include "qcd/zoo.hpp"
