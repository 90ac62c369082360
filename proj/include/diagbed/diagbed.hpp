#pragma once

#include "diagbed/belief.hpp"
#include "diagbed/csv.hpp"
#include "diagbed/dataset.hpp"
#include "diagbed/engine.hpp"
#include "diagbed/error.hpp"
#include "diagbed/experiment.hpp"
#include "diagbed/metrics.hpp"
#include "diagbed/prompts.hpp"
#include "diagbed/remote_surrogate.hpp"
#include "diagbed/reply_parsing.hpp"
#include "diagbed/schema.hpp"
#include "diagbed/scripted_surrogate.hpp"
#include "diagbed/service.hpp"
#include "diagbed/session_store.hpp"
#include "diagbed/surrogate.hpp"
#include "diagbed/synthetic_world.hpp"
#include "diagbed/trajectory.hpp"
#include "diagbed/value.hpp"
