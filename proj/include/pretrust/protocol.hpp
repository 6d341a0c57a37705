#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "pretrust/ledger.hpp"
#include "pretrust/tee.hpp"

// Role state machines for the guarantee handshake, withdrawal, arbitration
// and epoch rotation. Each function is one protocol step: it checks the
// step's guards and either returns the next message or a Failure naming the
// guard that tripped.
namespace pretrust {

// Group-side bookkeeping for TxInfos admitted by a payer-shard group.
struct Admission {
  TxInfo txinfo;
  SimTime arrival = 0;
  Amount reserved = 0;
  Height height_max = 0;
  std::map<Address, Counter> issued;  // guarSN handed out per candidate
};

struct GroupBook {
  std::map<Digest, Admission> admissions;
  std::set<Digest> closed;  // admissions whose window lapsed unrecorded
};

struct PayerTx {
  TxInfo txinfo;
  SimTime sent = 0;
  bool countersigned = false;
};

struct PayerState {
  std::map<Digest, PayerTx> txs;
};

struct PayeeTx {
  TxInfo txinfo;
  EpochIndex cosign_epoch = 0;
  bool accepted = false;
  SimTime accepted_at = 0;
};

struct PayeeState {
  std::map<Digest, PayeeTx> txs;
};

inline std::size_t priority_rank(std::span<const Address> order, const Address& who) {
  auto it = std::find(order.begin(), order.end(), who);
  return static_cast<std::size_t>(it - order.begin());
}

// Run by the candidate guarantor G of the payer's shard group g_P.
// Guards: signatures valid, P.balance >= c + fee (net of earlier admissions),
// txSN is the payer's next serial, neither party withdrawal-locked. A TxInfo
// admitted once may be answered by further candidates on fallback without
// being charged again.
inline Outcome<PreGuarantee1> verify_txinfo(LedgerState& ledger, GroupBook& book,
                                            const KeyPair& guarantor, const TxInfo& tx,
                                            SimTime now) {
  if (!verify_structure(tx)) return fail("invalid TxInfo signatures");
  if (!ledger.has_account(tx.payer) || !ledger.has_account(tx.payee)) return fail("unknown party");
  if (book.closed.contains(tx.id)) return fail("TxInfo window already lapsed");
  const auto g_addr = derive_address(guarantor.pk);
  const ShardId shard = assign_tx_shard(tx.payer, ledger.params.shard_bits);
  const auto& roster = ledger.epoch().roster(shard);
  if (!std::binary_search(roster.begin(), roster.end(), g_addr))
    return fail("guarantor not in payer shard group");
  auto& payer = ledger.account(tx.payer);
  if (payer.withdrawal_locked || ledger.account(tx.payee).withdrawal_locked)
    return fail("party is withdrawal-locked");

  auto adm = book.admissions.find(tx.id);
  if (adm == book.admissions.end()) {
    if (tx.payer_sn != payer.next_txsn) return fail("invalid txSN");
    const Amount owed = tx.amount + tx.guarantee_fee;
    if (payer.spendable() < owed) return fail("payer balance below c + fee");
    payer.reserved += owed;
    payer.next_txsn += 1;
    // Candidate r answers r turns after the TxInfo reached the group, so the
    // first admission dates the arrival back by the answering candidate's rank.
    const auto order = elect_guarantor(roster, tx.id);
    const SimTime turns = priority_rank(order, g_addr) * ledger.params.response_timeout;
    const SimTime arrival = now >= turns ? now - turns : 0;
    adm = book.admissions.emplace(tx.id, Admission{tx, arrival, owed, 0, {}}).first;
  } else if (adm->second.txinfo != tx) {
    return fail("TxInfo conflicts with admitted one");
  }
  if (adm->second.issued.contains(g_addr)) return fail("guarantor already answered");

  auto& g_acct = ledger.account(g_addr);
  const Counter guar_sn = g_acct.next_guarsn++;
  const Height tip = ledger.chains.at(shard).tip_height();
  const BlockExpectation expectation{shard, tip + 1, tip + 1 + ledger.params.expectation_window};
  adm->second.issued[g_addr] = guar_sn;
  adm->second.height_max = std::max(adm->second.height_max, expectation.height_max);
  return issue_pre_guarantee1(guarantor, tx, guar_sn, expectation);
}

// Payer step: countersign the first acceptable PreGuarantee1 for a TxInfo.
// The k-th candidate of the priority list is acceptable only once
// k * response_timeout has elapsed since the TxInfo was sent.
inline Outcome<PreGuarantee2> payer_counter_sign(PayerState& payer, const KeyPair& keys,
                                                 const LedgerState& ledger,
                                                 const PreGuarantee1& pg1, SimTime now) {
  if (!verify_structure(pg1)) return fail("invalid PreGuarantee1 signatures");
  auto it = payer.txs.find(pg1.txinfo.id);
  if (it == payer.txs.end() || it->second.txinfo != pg1.txinfo)
    return fail("PreGuarantee1 for a TxInfo the payer did not sign");
  if (it->second.countersigned) return fail("prior guarantee response already accepted");
  const auto payer_addr = derive_address(keys.pk);
  if (payer_addr != pg1.txinfo.payer) return fail("not the payer of this TxInfo");
  const ShardId shard = assign_tx_shard(payer_addr, ledger.params.shard_bits);
  if (pg1.expectation.shard != shard) return fail("expected block is not in the payer shard");
  const auto order = elect_guarantor(ledger.epoch().roster(shard), pg1.txinfo.id);
  const auto rank = priority_rank(order, pg1.guarantor);
  if (rank == order.size()) return fail("guarantor not in payer shard group");
  if (now < it->second.sent + rank * ledger.params.response_timeout)
    return fail("fallback candidate answered before its turn");
  it->second.countersigned = true;
  return countersign_pre_guarantee1(keys, pg1);
}

// Run by the group g_G holding the guarantor G in the current epoch. Guards:
// signatures valid, guaranteePriority valid, available deposit of G >=
// (c + fee) * collateral_ratio, guarSN is the one issued for this TxInfo.
// At most one Guarantee is ever sealed per TxInfo id.
inline Outcome<Guarantee> group_generate_guarantee(LedgerState& ledger, GroupBook& book,
                                                   ShardId group_shard,
                                                   std::span<const KeyPair> roster_keys,
                                                   const PreGuarantee2& pg2, SimTime now) {
  if (!verify_structure(pg2)) return fail("invalid PreGuarantee2 signatures");
  const auto& pg1 = pg2.pg1;
  const auto& tx = pg1.txinfo;
  const auto& epoch = ledger.epoch();
  const auto& roster = epoch.roster(group_shard);
  if (!std::binary_search(roster.begin(), roster.end(), pg1.guarantor))
    return fail("guarantor not in this group");
  if (ledger.sealed.contains(tx.id)) return fail("TxInfo already guaranteed");

  auto adm = book.admissions.find(tx.id);
  if (adm == book.admissions.end() || adm->second.txinfo != tx) return fail("TxInfo not admitted");
  const ShardId payer_shard = assign_tx_shard(tx.payer, ledger.params.shard_bits);
  const auto order = elect_guarantor(epoch.roster(payer_shard), tx.id);
  const auto rank = priority_rank(order, pg1.guarantor);
  if (rank == order.size() || now < adm->second.arrival + rank * ledger.params.response_timeout)
    return fail("invalid guaranteePriority");

  auto issued = adm->second.issued.find(pg1.guarantor);
  if (issued == adm->second.issued.end() || issued->second != pg1.guar_sn)
    return fail("invalid guarSN");

  const Amount amount = lock_amount(ledger.params, tx.amount, tx.guarantee_fee);
  auto locked = lock_capacity(ledger, pg1.guarantor, amount);
  if (!locked) return fail("available deposit below (c + fee) * collateral_ratio");
  ledger.locks[tx.id] = LockEntry{pg1.guarantor, amount};
  ledger.sealed.insert(tx.id);
  return seal_guarantee(roster_keys, epoch.index, group_shard, pg2);
}

// Payee step before handing over the goods. The group signature must come
// from the roster of the epoch in which the payee co-signed, or the current
// one, and verify against it.
inline bool payee_verify(PayeeState& payee, const LedgerState& ledger, const Guarantee& g,
                         SimTime now) {
  auto it = payee.txs.find(g.id());
  if (it == payee.txs.end() || it->second.txinfo != g.txinfo()) return false;
  const auto current = ledger.epoch().index;
  if (g.gsig.epoch != current && g.gsig.epoch != it->second.cosign_epoch) return false;
  if (g.gsig.epoch > current) return false;
  if (g.expectation().shard != assign_tx_shard(g.txinfo().payer, ledger.params.shard_bits))
    return false;
  if (!verify_structure(g, ledger.roster_lookup())) return false;
  it->second.accepted = true;
  it->second.accepted_at = now;
  return true;
}

// Run by the requester's shard group: validate, deduct immediately, and emit
// the group-signed check for the TEE.
inline Outcome<WithdrawalCheck> handle_withdrawal_request(LedgerState& ledger, ShardId group_shard,
                                                          std::span<const KeyPair> roster_keys,
                                                          const WithdrawalRequest& req) {
  if (!verify_structure(req)) return fail("invalid withdrawal request signature");
  if (!ledger.has_account(req.addr)) return fail("unknown account");
  if (assign_tx_shard(req.addr, ledger.params.shard_bits) != group_shard)
    return fail("requester not in this shard");
  auto& acct = ledger.account(req.addr);
  if (acct.withdrawal_locked) return fail("withdrawal already pending");
  for (const auto& [id, d] : ledger.deductions)
    if (d.addr == req.addr && d.status == DeductionStatus::deducted)
      return fail("withdrawal already pending");
  if (req.serial != acct.next_withdrawal_sn) return fail("invalid withdrawal serial");
  if (acct.spendable() < req.token) return fail("balance below requested token");

  const Effect e{req.addr, Bucket::balance, -static_cast<std::int64_t>(req.token)};
  apply_effects(ledger, std::span<const Effect>(&e, 1));
  acct.next_withdrawal_sn += 1;
  ledger.deductions[request_digest(req)] = Deduction{req.addr, req.token, DeductionStatus::deducted};
  return make_withdrawal_check(roster_keys, ledger.epoch().index, group_shard, req);
}

// Payee's claim once the expectation window has passed: succeeds only when
// no block of the payer shard within the window carries the guarantee.
inline Outcome<ArbitrationRecord> file_arbitration(const LedgerState& ledger,
                                                   const Address& claimant, const Guarantee& g) {
  if (!verify_structure(g, ledger.roster_lookup())) return fail("invalid guarantee signatures");
  if (claimant != g.txinfo().payee) return fail("claimant is not the payee");
  if (ledger.arbitrated.contains(g.id())) return fail("already arbitrated");
  const auto& e = g.expectation();
  if (e.shard >= ledger.chains.size()) return fail("unknown shard");
  const auto& chain = ledger.chains[e.shard];
  if (chain.blocks.empty() || chain.tip_height() < e.height_max)
    return fail("expectation window not elapsed");
  for (const auto& b : chain.blocks) {
    if (!e.covers(b.height)) continue;
    for (const auto& rec : b.records)
      if (const auto* gr = std::get_if<GuaranteeRecord>(&rec); gr && gr->guarantee == g)
        return fail("guarantee is recorded");
  }
  ArbitrationRecord r;
  r.guarantee = g;
  r.claimant = claimant;
  r.compensation_owed = ledger.params.compensation_weight.floor_of(g.txinfo().amount);
  r.punishment_owed = ledger.params.punishment_weight.floor_of(g.txinfo().amount);
  return r;
}

inline Height epoch_end_height(const SecurityParams& p, EpochIndex epoch) {
  return (epoch + 1) * p.blocks_per_epoch;
}

// Once every shard holds the n-th block of the current epoch, fold the end
// blocks into the next beacon and reassign guarantors, including any that
// registered during the epoch.
inline const EpochState& epoch_tick(LedgerState& ledger) {
  const auto& cur = ledger.epoch();
  const Height end = epoch_end_height(ledger.params, cur.index);
  std::vector<Digest> end_hashes;
  for (const auto& chain : ledger.chains) {
    if (chain.blocks.empty() || chain.tip_height() != end)
      throw Error("epoch_tick: shard " + std::to_string(chain.shard) + " not at epoch end");
    end_hashes.push_back(chain.blocks.back().hash);
  }
  auto gh = compute_global_hash(end_hashes, ledger.params.shard_bits);
  auto guarantors = ledger.guarantors();
  ledger.epochs.push_back(derive_epoch(cur.index + 1, gh, guarantors, ledger.params.shard_bits));
  return ledger.epochs.back();
}

// Admissions whose window lapsed without the guarantee being recorded free
// the payer's reserved balance. Returns the ids released.
inline std::vector<Digest> expire_admissions(LedgerState& ledger, GroupBook& book) {
  std::vector<Digest> out;
  for (auto it = book.admissions.begin(); it != book.admissions.end();) {
    const auto& adm = it->second;
    const ShardId shard = assign_tx_shard(adm.txinfo.payer, ledger.params.shard_bits);
    const bool lapsed = ledger.chains.at(shard).tip_height() >= adm.height_max;
    if (ledger.recorded.contains(it->first)) {
      it = book.admissions.erase(it);
      continue;
    }
    if (lapsed && adm.height_max > 0) {
      auto& payer = ledger.account(adm.txinfo.payer);
      payer.reserved -= std::min(payer.reserved, adm.reserved);
      book.closed.insert(it->first);
      out.push_back(it->first);
      it = book.admissions.erase(it);
      continue;
    }
    ++it;
  }
  return out;
}

}  // namespace pretrust
