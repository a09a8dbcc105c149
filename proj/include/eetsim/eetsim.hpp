// eetsim.hpp: umbrella header
#pragma once

#include "units.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "pauli.hpp"
#include "io.hpp"
#include "spectral.hpp"
#include "lineshape.hpp"
#include "rng.hpp"
#include "noise.hpp"
#include "heom.hpp"
#include "parallel.hpp"
#include "trajectory.hpp"
#include "grape.hpp"
#include "ramsey.hpp"
