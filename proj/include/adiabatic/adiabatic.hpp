#pragma once

#include "adiabatic/errors.hpp"
#include "adiabatic/linalg.hpp"
#include "adiabatic/quadrature.hpp"
#include "adiabatic/interpolation.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/spectral.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/evolve.hpp"
#include "adiabatic/metrics.hpp"
#include "adiabatic/fit.hpp"
#include "adiabatic/nogo.hpp"
#include "adiabatic/asymptotics.hpp"
#include "adiabatic/io.hpp"
#include "adiabatic/config.hpp"
#include "adiabatic/experiment.hpp"
