#pragma once

#include "pretrust/common.hpp"
#include "pretrust/bytes.hpp"
#include "pretrust/crypto.hpp"
#include "pretrust/messages.hpp"
#include "pretrust/sharding.hpp"
#include "pretrust/membership.hpp"
#include "pretrust/ledger.hpp"
#include "pretrust/external_chain.hpp"
#include "pretrust/tee.hpp"
#include "pretrust/protocol.hpp"
#include "pretrust/audit.hpp"
#include "pretrust/simulator.hpp"
#include "pretrust/scenarios.hpp"
#include "pretrust/json_io.hpp"
