#ifndef OFFSET_RISK_OFFSET_RISK_HPP
#define OFFSET_RISK_OFFSET_RISK_HPP

#include "offset_risk/complexity.hpp"
#include "offset_risk/concentration.hpp"
#include "offset_risk/estimators.hpp"
#include "offset_risk/instance_io.hpp"
#include "offset_risk/mirror_descent.hpp"
#include "offset_risk/model.hpp"
#include "offset_risk/parallel.hpp"
#include "offset_risk/risk.hpp"
#include "offset_risk/rng.hpp"
#include "offset_risk/sparse.hpp"
#include "offset_risk/stats.hpp"

#endif  // OFFSET_RISK_OFFSET_RISK_HPP
