#pragma once

#include "smpsim/errors.hpp"
#include "smpsim/rng.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/smp.hpp"
#include "smpsim/simulate.hpp"
#include "smpsim/testers.hpp"
#include "smpsim/infer.hpp"
#include "smpsim/public_uniformity.hpp"
#include "smpsim/identity.hpp"
#include "smpsim/verify.hpp"
#include "smpsim/suites.hpp"
#include "smpsim/harness.hpp"
