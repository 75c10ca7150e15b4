#pragma once

#include "adversary.hpp"
#include "agents.hpp"
#include "audit.hpp"
#include "builtins.hpp"
#include "env.hpp"
#include "explore.hpp"
#include "firmware.hpp"
#include "json_io.hpp"
#include "kds.hpp"
#include "lemmas.hpp"
#include "scenario.hpp"
#include "term.hpp"
#include "trace.hpp"
#include "world.hpp"
