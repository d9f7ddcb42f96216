#pragma once

#include "pacc/analysis.hpp"
#include "pacc/checkpoint.hpp"
#include "pacc/config.hpp"
#include "pacc/metrics.hpp"
#include "pacc/models.hpp"
#include "pacc/nn/attention.hpp"
#include "pacc/nn/gradcheck.hpp"
#include "pacc/nn/layers.hpp"
#include "pacc/nn/loss.hpp"
#include "pacc/nn/optim.hpp"
#include "pacc/pipeline.hpp"
#include "pacc/simlog.hpp"
#include "pacc/training.hpp"
