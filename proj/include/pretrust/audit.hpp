#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pretrust/external_chain.hpp"
#include "pretrust/ledger.hpp"
#include "pretrust/tee.hpp"

// Whole-system invariant checks. Each returns the name of the violated
// invariant plus detail, or nullopt.
namespace pretrust {

struct Violation {
  std::string invariant;
  std::string detail;
};

using AuditResult = std::optional<Violation>;

// Token conservation, exact:
//   sum(external balances) + contract balance == initial external supply
//   contract balance == sum(internal balance) + sum(deposit) + withdrawals in flight
// where in-flight withdrawals are deducted internally but neither redeemed
// on chain nor restored. Locked tokens are part of deposits.
inline AuditResult audit_conservation(const LedgerState& ledger, const PublicChain& chain) {
  unsigned __int128 external = chain.contract_balance();
  for (const auto& [a, v] : chain.balances()) external += v;
  if (external != chain.initial_supply())
    return Violation{"token_conservation",
                     "external balances + contract != initial supply"};

  unsigned __int128 internal = ledger.withdrawals_in_flight();
  for (const auto& [a, acct] : ledger.accounts) internal += acct.balance + acct.deposit;
  if (internal != chain.contract_balance())
    return Violation{"token_conservation",
                     "contract balance != internal balances + deposits + in-flight withdrawals"};
  return std::nullopt;
}

inline AuditResult audit_account_bounds(const LedgerState& ledger) {
  for (const auto& [a, acct] : ledger.accounts) {
    if (acct.locked > acct.deposit)
      return Violation{"locked_within_deposit", a.hex()};
    if (acct.reserved > acct.balance)
      return Violation{"reserved_within_balance", a.hex()};
  }
  Amount lock_sum = 0;
  for (const auto& [id, l] : ledger.locks) lock_sum += l.amount;
  Amount locked_total = 0;
  for (const auto& [a, acct] : ledger.accounts) locked_total += acct.locked;
  if (lock_sum != locked_total)
    return Violation{"lock_registry_matches_accounts", "registry and account locks differ"};
  return std::nullopt;
}

// Every stored block revalidates from genesis: consecutive heights, hash
// links, producer group signature, record structure.
inline AuditResult audit_chain_integrity(const LedgerState& ledger) {
  for (const auto& chain : ledger.chains) {
    Digest prev{};
    for (std::size_t i = 0; i < chain.blocks.size(); ++i) {
      const auto& b = chain.blocks[i];
      auto where = "shard " + std::to_string(chain.shard) + " height " + std::to_string(i);
      if (b.shard != chain.shard || b.height != i || b.prev_hash != prev)
        return Violation{"chain_integrity", "broken link at " + where};
      if (!validate_block(b, ledger)) return Violation{"chain_integrity", "invalid block at " + where};
      prev = b.hash;
    }
  }
  const ArbitrationBlock* prev = nullptr;
  for (const auto& b : ledger.arbitration) {
    if (!validate_arbitration_block(b, prev, ledger))
      return Violation{"chain_integrity",
                       "invalid arbitration block at height " + std::to_string(b.height)};
    prev = &b;
  }
  // A settlement must refer to a guarantee recorded in its payer shard.
  std::set<Digest> recorded;
  for (const auto& chain : ledger.chains)
    for (const auto& b : chain.blocks)
      for (const auto& rec : b.records)
        if (const auto* g = std::get_if<GuaranteeRecord>(&rec)) recorded.insert(g->guarantee.id());
  for (const auto& chain : ledger.chains)
    for (const auto& b : chain.blocks)
      for (const auto& rec : b.records)
        if (const auto* s = std::get_if<SettlementRecord>(&rec); s && !recorded.contains(s->guarantee.id()))
          return Violation{"chain_integrity", "settlement of unrecorded guarantee"};
  return std::nullopt;
}

// Replaying the chains from the membership list reproduces every balance and
// deposit. Only meaningful once pending pools have been flushed into blocks.
inline AuditResult audit_replay(const LedgerState& ledger) {
  auto replayed = replay_accounts(ledger.params, ledger.membership, ledger.chains, ledger.arbitration);
  for (const auto& [a, acct] : ledger.accounts) {
    auto it = replayed.find(a);
    ReplayedAccount r = it == replayed.end() ? ReplayedAccount{} : it->second;
    if (r.balance != static_cast<std::int64_t>(acct.balance) ||
        r.deposit != static_cast<std::int64_t>(acct.deposit))
      return Violation{"replay_determinism", "account " + a.hex() + " differs after replay"};
  }
  return std::nullopt;
}

// Every certification issued corresponds to an exact deduction.
inline AuditResult audit_certifications(const TeeState& tee, const LedgerState& ledger) {
  for (const auto& [id, cert] : tee.issued) {
    auto d = ledger.deductions.find(id);
    if (d == ledger.deductions.end() || d->second.addr != cert.addr || d->second.token != cert.token)
      return Violation{"certification_backed_by_deduction", id.hex()};
  }
  return std::nullopt;
}

}  // namespace pretrust
