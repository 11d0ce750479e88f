// Umbrella header.

#pragma once

#include "tacle/eval.hpp"
#include "tacle/experiment.hpp"
#include "tacle/linalg.hpp"
#include "tacle/log.hpp"
#include "tacle/model.hpp"
#include "tacle/rng.hpp"
#include "tacle/stage1.hpp"
#include "tacle/stage2.hpp"
#include "tacle/stream.hpp"
#include "tacle/threshold.hpp"
