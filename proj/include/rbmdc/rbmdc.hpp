#pragma once

#include "rbmdc/analytic/oned.hpp"
#include "rbmdc/core/parallel.hpp"
#include "rbmdc/core/rng.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/adam.hpp"
#include "rbmdc/neural/checkpoint.hpp"
#include "rbmdc/neural/mlp.hpp"
#include "rbmdc/policies/evaluate.hpp"
#include "rbmdc/policies/policy.hpp"
#include "rbmdc/policies/search.hpp"
#include "rbmdc/problems/presets.hpp"
#include "rbmdc/problems/problem.hpp"
#include "rbmdc/rbm/matrices.hpp"
#include "rbmdc/rbm/paths.hpp"
#include "rbmdc/rbm/skorokhod.hpp"
#include "rbmdc/solver/losses.hpp"
#include "rbmdc/solver/train.hpp"
