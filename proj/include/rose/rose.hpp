#pragma once

#include "rose/errors.hpp"
#include "rose/harness.hpp"
#include "rose/llm_gateway.hpp"
#include "rose/numeric.hpp"
#include "rose/openai.hpp"
#include "rose/orchestrator.hpp"
#include "rose/pool.hpp"
#include "rose/prompting.hpp"
#include "rose/report.hpp"
#include "rose/scoring.hpp"
