#pragma once

// Everything: model, simulation, backward solvers, PDE, pricing, harness.

#include "rankbsde/bsde_solver.hpp"
#include "rankbsde/config_io.hpp"
#include "rankbsde/core_model.hpp"
#include "rankbsde/harness.hpp"
#include "rankbsde/pde_solver.hpp"
#include "rankbsde/pricing.hpp"
#include "rankbsde/sde_engine.hpp"
#include "rankbsde/validation.hpp"
