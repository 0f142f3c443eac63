#pragma once

// Umbrella header.

#include "distilts/ablation.hpp"
#include "distilts/array.hpp"
#include "distilts/autodiff.hpp"
#include "distilts/cli.hpp"
#include "distilts/config.hpp"
#include "distilts/data.hpp"
#include "distilts/error.hpp"
#include "distilts/fta.hpp"
#include "distilts/grad_check.hpp"
#include "distilts/gradient_suite.hpp"
#include "distilts/losses.hpp"
#include "distilts/metrics.hpp"
#include "distilts/optim.hpp"
#include "distilts/signal.hpp"
#include "distilts/students.hpp"
#include "distilts/teacher.hpp"
#include "distilts/trainer.hpp"
