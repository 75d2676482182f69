#pragma once

// Confidence intervals for a'beta in linear regression with AR(1) errors, and
// Monte Carlo coverage curves for the OLS, FGLS and two-stage intervals.

#include "arcover/ar1.hpp"
#include "arcover/errors.hpp"
#include "arcover/gls.hpp"
#include "arcover/mc_engine.hpp"
#include "arcover/pretest.hpp"
#include "arcover/problem.hpp"
#include "arcover/psi_estimators.hpp"
#include "arcover/rng.hpp"
#include "arcover/student_t.hpp"
