#pragma once

#include <array>
#include <string>
#include <string_view>

#include "pretrust/simulator.hpp"

// Built-in scenario fixtures. Each is a plain SimConfig, so any of them can
// be exported to JSON, edited, and fed back through `run --config`.
namespace pretrust {

inline constexpr std::array<std::string_view, 8> kScenarioNames = {
    "happy_path",  "omit_guarantee", "overspend",        "replay_sn",
    "stale_gsig",  "expired_cert",   "silent_guarantor", "withdrawal_roundtrip",
};

inline SimConfig builtin_scenario(std::string_view name, std::uint64_t seed = 42) {
  SimConfig c;
  c.scenario = std::string(name);
  c.seed = seed;
  if (name == "happy_path") return c;
  if (name == "omit_guarantee") {
    c.adversary = AdversaryProfile{Behavior::omit_guarantee_from_block, 3};
    return c;
  }
  if (name == "overspend") {
    c.adversary = AdversaryProfile{Behavior::overspend_payer, 2};
    return c;
  }
  if (name == "replay_sn") {
    c.adversary = AdversaryProfile{Behavior::replay_txSN, 3};
    return c;
  }
  if (name == "stale_gsig") {
    c.adversary = AdversaryProfile{Behavior::stale_epoch_gsig, 5};
    return c;
  }
  if (name == "expired_cert") {
    c.params.time_interval = 5'000;
    c.workload.withdrawals = {{0, 50, 2'500}, {1, 40, 3'500}};
    c.adversary = AdversaryProfile{Behavior::expired_withdrawal_cert, 0};
    return c;
  }
  if (name == "silent_guarantor") {
    c.adversary = AdversaryProfile{Behavior::silent_elected_guarantor, 4};
    return c;
  }
  if (name == "withdrawal_roundtrip") {
    c.workload.withdrawals = {{0, 100, 2'500}, {1, 60, 5'500}, {2, 900, 7'500}, {0, 30, 9'500}};
    c.workload.registrations = {{2'200, 4'000, AccountKind::guarantor},
                                {3'200, 700, AccountKind::client}};
    return c;
  }
  throw ConfigError("unknown scenario: " + std::string(name));
}

}  // namespace pretrust
