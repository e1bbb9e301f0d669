#ifndef METAGLMM_METAGLMM_HPP
#define METAGLMM_METAGLMM_HPP

#include "metaglmm/data.hpp"
#include "metaglmm/datasets.hpp"
#include "metaglmm/family.hpp"
#include "metaglmm/fit.hpp"
#include "metaglmm/inference.hpp"
#include "metaglmm/interval.hpp"
#include "metaglmm/math.hpp"
#include "metaglmm/nn_baseline.hpp"
#include "metaglmm/optim.hpp"
#include "metaglmm/qmc.hpp"
#include "metaglmm/rng.hpp"
#include "metaglmm/sim.hpp"
#include "metaglmm/variances.hpp"

#endif
