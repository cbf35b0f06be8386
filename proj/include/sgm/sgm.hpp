// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sgm/config.hpp"
#include "sgm/error.hpp"
#include "sgm/experiments.hpp"
#include "sgm/forward.hpp"
#include "sgm/io.hpp"
#include "sgm/metrics.hpp"
#include "sgm/numerics/assignment.hpp"
#include "sgm/numerics/bytes.hpp"
#include "sgm/numerics/hash.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"
#include "sgm/oracle.hpp"
#include "sgm/oracle_checks.hpp"
#include "sgm/sampler.hpp"
#include "sgm/schedule.hpp"
#include "sgm/scorenet.hpp"
#include "sgm/targets.hpp"
#include "sgm/trainer.hpp"
#include "sgm/verify.hpp"
