#pragma once

#include "iarn/error.hpp"
#include "iarn/numerics/tensor.hpp"
#include "iarn/numerics/tape.hpp"
#include "iarn/numerics/finite_difference.hpp"
#include "iarn/data/interactions.hpp"
#include "iarn/data/sequences.hpp"
#include "iarn/data/taxonomy.hpp"
#include "iarn/model/parameters.hpp"
#include "iarn/model/network.hpp"
#include "iarn/model/predictor.hpp"
#include "iarn/training/optimizer.hpp"
#include "iarn/training/trainer.hpp"
#include "iarn/evaluation/metrics.hpp"
#include "iarn/evaluation/harness.hpp"
#include "iarn/io/checkpoint.hpp"
