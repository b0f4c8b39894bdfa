#pragma once

// Umbrella header. Pulls in the whole pipeline; include the individual
// headers when the HTTP stack is not wanted.

#include "llmmob/backend_types.hpp"
#include "llmmob/baselines.hpp"
#include "llmmob/config.hpp"
#include "llmmob/gateway.hpp"
#include "llmmob/geo.hpp"
#include "llmmob/hash.hpp"
#include "llmmob/ingest.hpp"
#include "llmmob/metrics.hpp"
#include "llmmob/mock_backend.hpp"
#include "llmmob/prompt.hpp"
#include "llmmob/response_parse.hpp"
#include "llmmob/runner.hpp"
#include "llmmob/stays.hpp"
#include "llmmob/time_util.hpp"
