#pragma once

#include <map>
#include <optional>
#include <vector>

#include "pretrust/external_chain.hpp"
#include "pretrust/ledger.hpp"

// Mock trusted execution environment. It is trusted and never fails: it holds
// the key whose public half the Withdraw contract checks, audits withdrawal
// checks against the internal records, and drives the account lock.
namespace pretrust {

struct TeeState {
  KeyPair keys;
  std::map<Address, WithdrawalCheck> pending;
  std::map<Digest, WithdrawalCertification> issued;  // by request digest

  explicit TeeState(KeyPair k) : keys(std::move(k)) {}
};

// Publishes the check: the requester is locked out of new transactions until
// tee_certify decides.
inline Status tee_submit_check(TeeState& tee, LedgerState& ledger, const WithdrawalCheck& check) {
  const auto& addr = check.request.addr;
  if (!verify_structure(check, ledger.roster_lookup())) return fail("invalid withdrawal check");
  if (check.gsig.shard != assign_tx_shard(addr, ledger.params.shard_bits))
    return fail("check signed by the wrong shard group");
  if (!ledger.has_account(addr)) return fail("unknown account");
  if (tee.pending.contains(addr)) return fail("check already pending for address");
  tee.pending.emplace(addr, check);
  ledger.account(addr).withdrawal_locked = true;
  return Done{};
}

// Certifies only when the ledger shows exactly the requested deduction. On a
// mismatch the deducted tokens are restored (a compensating record is
// appended to `compensations`). The lock is relieved either way.
inline Outcome<WithdrawalCertification> tee_certify(TeeState& tee, LedgerState& ledger,
                                                    const Address& addr, SimTime now,
                                                    std::vector<RestoreRecord>* compensations = nullptr) {
  auto it = tee.pending.find(addr);
  if (it == tee.pending.end()) return fail("no pending check");
  const WithdrawalCheck check = it->second;
  tee.pending.erase(it);
  if (ledger.has_account(addr)) ledger.account(addr).withdrawal_locked = false;

  const auto request_id = request_digest(check.request);
  auto d = ledger.deductions.find(request_id);
  const bool deducted = d != ledger.deductions.end() && d->second.status == DeductionStatus::deducted;
  if (deducted && d->second.addr == addr && d->second.token == check.request.token) {
    d->second.status = DeductionStatus::certified;
    auto cert = issue_certification(tee.keys, now, addr, check.request.token, request_id);
    tee.issued.emplace(request_id, cert);
    return cert;
  }
  if (deducted) {
    RestoreRecord r{request_id, d->second.addr, d->second.token};
    const Effect e{r.addr, Bucket::balance, static_cast<std::int64_t>(r.token)};
    apply_effects(ledger, std::span<const Effect>(&e, 1));
    d->second.status = DeductionStatus::restored;
    if (compensations) compensations->push_back(r);
    return fail("deduction does not match check");
  }
  return fail("no deduction recorded for check");
}

// Certificates that lapsed without being redeemed on the public chain are
// refunded to the internal balance.
inline std::optional<RestoreRecord> tee_expire(TeeState& tee, LedgerState& ledger,
                                               const PublicChain& chain, const Digest& request_id,
                                               SimTime now) {
  auto c = tee.issued.find(request_id);
  if (c == tee.issued.end()) return std::nullopt;
  auto d = ledger.deductions.find(request_id);
  if (d == ledger.deductions.end() || d->second.status != DeductionStatus::certified)
    return std::nullopt;
  if (now <= c->second.time + ledger.params.time_interval) return std::nullopt;
  if (chain.redeemed(certification_digest(c->second))) return std::nullopt;
  RestoreRecord r{request_id, d->second.addr, d->second.token};
  const Effect e{r.addr, Bucket::balance, static_cast<std::int64_t>(r.token)};
  apply_effects(ledger, std::span<const Effect>(&e, 1));
  d->second.status = DeductionStatus::restored;
  return r;
}

}  // namespace pretrust
