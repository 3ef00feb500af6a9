#pragma once

#include "ccm/agent.hpp"
#include "ccm/baselines.hpp"
#include "ccm/checkpoint.hpp"
#include "ccm/cuts.hpp"
#include "ccm/environments.hpp"
#include "ccm/errors.hpp"
#include "ccm/fcr.hpp"
#include "ccm/goal.hpp"
#include "ccm/graph.hpp"
#include "ccm/graph_io.hpp"
#include "ccm/harness.hpp"
#include "ccm/log.hpp"
#include "ccm/nn.hpp"
#include "ccm/policy.hpp"
#include "ccm/rl.hpp"
#include "ccm/rng.hpp"
