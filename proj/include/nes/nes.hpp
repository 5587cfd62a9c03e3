#pragma once

#include "nes/errors.hpp"
#include "nes/io.hpp"
#include "nes/model.hpp"
#include "nes/ode.hpp"
#include "nes/parallel.hpp"
#include "nes/reduction.hpp"
#include "nes/sim.hpp"
#include "nes/sweep.hpp"
#include "nes/tmdopt.hpp"
