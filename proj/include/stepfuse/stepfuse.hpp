#pragma once

#include "stepfuse/ensemble.hpp"
#include "stepfuse/errors.hpp"
#include "stepfuse/losses.hpp"
#include "stepfuse/metrics.hpp"
#include "stepfuse/numerics.hpp"
#include "stepfuse/schedule.hpp"
#include "stepfuse/trainer.hpp"
