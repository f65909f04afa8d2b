#pragma once

#include "redteam/error.hpp"
#include "redteam/util.hpp"
#include "redteam/tokens.hpp"
#include "redteam/cipher.hpp"
#include "redteam/templates.hpp"
#include "redteam/pipeline.hpp"
#include "redteam/baselines.hpp"
#include "redteam/method.hpp"
#include "redteam/backends.hpp"
#include "redteam/record.hpp"
#include "redteam/scoring.hpp"
#include "redteam/harness.hpp"
#include "redteam/report.hpp"
#include "redteam/config.hpp"
#include "redteam/cli.hpp"
