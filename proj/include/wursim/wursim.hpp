#pragma once

#include "wursim/analytic.hpp"
#include "wursim/experiment.hpp"
#include "wursim/grouping.hpp"
#include "wursim/params.hpp"
#include "wursim/rng.hpp"
#include "wursim/simcore.hpp"
#include "wursim/validation.hpp"
