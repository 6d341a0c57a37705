#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include "pretrust/membership.hpp"
#include "pretrust/messages.hpp"
#include "pretrust/sharding.hpp"

// Internal-environment state: accounts, collateral locks, the per-shard
// Record Chains, the Arbitration Chain, and settlement.
namespace pretrust {

struct Account {
  Address addr;
  AccountKind kind = AccountKind::client;
  Amount balance = 0;
  Amount deposit = 0;
  Amount locked = 0;    // part of deposit backing outstanding guarantees
  Amount reserved = 0;  // part of balance promised to admitted, unsettled TxInfos
  Counter next_txsn = 0;
  Counter next_guarsn = 0;
  Counter next_withdrawal_sn = 0;
  bool withdrawal_locked = false;

  Amount available_deposit() const noexcept { return deposit - locked; }
  Amount spendable() const noexcept { return balance - reserved; }
  bool operator==(const Account&) const = default;
};

enum class Bucket { balance, deposit };

// One signed change to one account bucket. Every ledger mutation is a list of
// effects, so live application and replay from the chains share one path.
struct Effect {
  Address account;
  Bucket bucket = Bucket::balance;
  std::int64_t delta = 0;
  bool operator==(const Effect&) const = default;
};

// ---------------------------------------------------------------------------
// Record Chain records

struct GuaranteeRecord {
  Guarantee guarantee;
  bool operator==(const GuaranteeRecord&) const = default;
};

// The payee's countersigned broadcast of a recorded Guarantee.
struct SettlementRecord {
  Guarantee guarantee;
  Signature payee_sig;
  bool operator==(const SettlementRecord&) const = default;
};

struct DeductionRecord {
  WithdrawalCheck check;
  bool operator==(const DeductionRecord&) const = default;
};

// Compensating credit when a deduction is not certified or its certificate
// lapses unredeemed.
struct RestoreRecord {
  Digest request_id;
  Address addr;
  Amount token = 0;
  bool operator==(const RestoreRecord&) const = default;
};

using Record = std::variant<GuaranteeRecord, SettlementRecord, DeductionRecord, RestoreRecord>;

inline Bytes payee_claim_payload(const Digest& guarantee_id) {
  Writer w;
  w.str("pretrust.payee.claim").bytes(guarantee_id.bytes);
  return std::move(w).take();
}

inline Bytes encode(const Record& rec) {
  Writer w;
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, GuaranteeRecord>) {
          w.u64(0).bytes(encode(r.guarantee));
        } else if constexpr (std::is_same_v<T, SettlementRecord>) {
          w.u64(1).bytes(encode(r.guarantee)).bytes(encode(r.payee_sig));
        } else if constexpr (std::is_same_v<T, DeductionRecord>) {
          w.u64(2).bytes(encode(r.check));
        } else {
          w.u64(3).bytes(r.request_id.bytes).bytes(r.addr.bytes).u64(r.token);
        }
      },
      rec);
  return std::move(w).take();
}

template <>
inline Record decode<Record>(ByteView data) {
  Reader r(data);
  auto kind = r.u64();
  Record out;
  switch (kind) {
    case 0:
      out = GuaranteeRecord{decode<Guarantee>(r.field())};
      break;
    case 1: {
      auto g = decode<Guarantee>(r.field());
      auto sig = decode<Signature>(r.field());
      out = SettlementRecord{std::move(g), sig};
      break;
    }
    case 2:
      out = DeductionRecord{decode<WithdrawalCheck>(r.field())};
      break;
    case 3: {
      RestoreRecord rr;
      rr.request_id = detail::read_fixed<Digest>(r);
      rr.addr = detail::read_fixed<Address>(r);
      rr.token = r.u64();
      out = rr;
      break;
    }
    default:
      throw DecodeError("unknown record kind");
  }
  r.expect_end();
  return out;
}

struct Block {
  ShardId shard = 0;
  Height height = 0;
  EpochIndex epoch = 0;
  SimTime time = 0;
  Digest prev_hash;
  std::vector<Record> records;
  GroupSignature producer_gsig;
  Digest hash;

  bool operator==(const Block&) const = default;
};

inline Bytes block_header_bytes(const Block& b) {
  Writer w;
  w.str("pretrust.block").u64(b.shard).u64(b.height).u64(b.epoch).u64(b.time);
  w.bytes(b.prev_hash.bytes).count(b.records.size());
  for (const auto& r : b.records) w.bytes(encode(r));
  return std::move(w).take();
}

inline Digest compute_block_hash(const Block& b) { return hash_digest(block_header_bytes(b)); }

inline Bytes encode(const Block& b) {
  Writer w;
  w.bytes(block_header_bytes(b)).bytes(encode(b.producer_gsig)).bytes(b.hash.bytes);
  return std::move(w).take();
}

template <>
inline Block decode<Block>(ByteView data) {
  Reader outer(data);
  Block b;
  {
    Reader r(outer.field());
    if (r.str() != "pretrust.block") throw DecodeError("not a block header");
    auto shard = r.u64();
    if (shard > UINT32_MAX) throw DecodeError("shard index out of range");
    b.shard = static_cast<ShardId>(shard);
    b.height = r.u64();
    b.epoch = r.u64();
    b.time = r.u64();
    b.prev_hash = detail::read_fixed<Digest>(r);
    auto n = r.count();
    for (std::size_t i = 0; i < n; ++i) b.records.push_back(decode<Record>(r.field()));
    r.expect_end();
  }
  b.producer_gsig = decode<GroupSignature>(outer.field());
  b.hash = detail::read_fixed<Digest>(outer);
  outer.expect_end();
  return b;
}

struct RecordChain {
  ShardId shard = 0;
  std::vector<Block> blocks;

  Height tip_height() const { return blocks.empty() ? 0 : blocks.back().height; }
  Digest tip_hash() const { return blocks.empty() ? Digest{} : blocks.back().hash; }
};

// ---------------------------------------------------------------------------
// Arbitration Chain

struct ArbitrationRecord {
  Guarantee guarantee;
  Address claimant;
  Amount compensation_owed = 0;
  Amount punishment_owed = 0;
  // Filled when the record is sealed into a block.
  Address producer;
  std::vector<Effect> effects;
  Amount shortfall = 0;

  bool operator==(const ArbitrationRecord&) const = default;
};

struct ArbitrationBlock {
  Height height = 0;
  SimTime time = 0;
  Digest prev_hash;
  Address producer;
  std::vector<ArbitrationRecord> records;
  Digest hash;

  bool operator==(const ArbitrationBlock&) const = default;
};

inline void encode_effects(Writer& w, const std::vector<Effect>& effects) {
  w.count(effects.size());
  for (const auto& e : effects) {
    Writer ew;
    ew.bytes(e.account.bytes)
        .u64(e.bucket == Bucket::balance ? 0 : 1)
        .u64(static_cast<std::uint64_t>(e.delta));
    w.bytes(ew.data());
  }
}

inline Bytes encode(const ArbitrationRecord& a) {
  Writer w;
  w.bytes(encode(a.guarantee)).bytes(a.claimant.bytes).u64(a.compensation_owed);
  w.u64(a.punishment_owed).bytes(a.producer.bytes).u64(a.shortfall);
  encode_effects(w, a.effects);
  return std::move(w).take();
}

template <>
inline ArbitrationRecord decode<ArbitrationRecord>(ByteView data) {
  Reader r(data);
  ArbitrationRecord a;
  a.guarantee = decode<Guarantee>(r.field());
  a.claimant = detail::read_fixed<Address>(r);
  a.compensation_owed = r.u64();
  a.punishment_owed = r.u64();
  a.producer = detail::read_fixed<Address>(r);
  a.shortfall = r.u64();
  auto n = r.count();
  for (std::size_t i = 0; i < n; ++i) {
    Reader er(r.field());
    Effect e;
    e.account = detail::read_fixed<Address>(er);
    auto bucket = er.u64();
    if (bucket > 1) throw DecodeError("unknown bucket");
    e.bucket = bucket == 0 ? Bucket::balance : Bucket::deposit;
    e.delta = static_cast<std::int64_t>(er.u64());
    er.expect_end();
    a.effects.push_back(e);
  }
  r.expect_end();
  return a;
}

inline Bytes arbitration_header_bytes(const ArbitrationBlock& b) {
  Writer w;
  w.str("pretrust.arbitration").u64(b.height).u64(b.time).bytes(b.prev_hash.bytes);
  w.bytes(b.producer.bytes).count(b.records.size());
  for (const auto& r : b.records) w.bytes(encode(r));
  return std::move(w).take();
}

inline Bytes encode(const ArbitrationBlock& b) {
  Writer w;
  w.bytes(arbitration_header_bytes(b)).bytes(b.hash.bytes);
  return std::move(w).take();
}

template <>
inline ArbitrationBlock decode<ArbitrationBlock>(ByteView data) {
  Reader outer(data);
  ArbitrationBlock b;
  {
    Reader r(outer.field());
    if (r.str() != "pretrust.arbitration") throw DecodeError("not an arbitration block");
    b.height = r.u64();
    b.time = r.u64();
    b.prev_hash = detail::read_fixed<Digest>(r);
    b.producer = detail::read_fixed<Address>(r);
    auto n = r.count();
    for (std::size_t i = 0; i < n; ++i)
      b.records.push_back(decode<ArbitrationRecord>(r.field()));
    r.expect_end();
  }
  b.hash = detail::read_fixed<Digest>(outer);
  outer.expect_end();
  return b;
}

// ---------------------------------------------------------------------------
// Aggregate state

struct LockEntry {
  Address guarantor;
  Amount amount = 0;
};

enum class DeductionStatus { deducted, certified, redeemed, restored };

struct Deduction {
  Address addr;
  Amount token = 0;
  DeductionStatus status = DeductionStatus::deducted;
};

struct LossEvent {
  Digest guarantee_id;
  Address guarantor;
  Amount shortfall = 0;
};

struct LedgerState {
  SecurityParams params;
  std::map<Address, Account> accounts;
  std::vector<MembershipEntry> membership;
  std::vector<RecordChain> chains;
  std::vector<ArbitrationBlock> arbitration;
  std::vector<EpochState> epochs;

  std::map<Digest, LockEntry> locks;          // by guarantee (TxInfo) id
  std::set<Digest> sealed;                    // ids that ever received a group signature
  std::map<Digest, Height> recorded;          // id -> payer-shard height
  std::set<Digest> settled;
  std::set<Digest> arbitrated;
  std::map<Digest, Deduction> deductions;     // by withdrawal request digest
  std::vector<LossEvent> losses;

  const EpochState& epoch() const {
    if (epochs.empty()) throw Error("ledger has no epoch");
    return epochs.back();
  }

  Account& account(const Address& a) {
    auto it = accounts.find(a);
    if (it == accounts.end()) throw Error("unknown account " + a.hex());
    return it->second;
  }
  const Account& account(const Address& a) const {
    auto it = accounts.find(a);
    if (it == accounts.end()) throw Error("unknown account " + a.hex());
    return it->second;
  }
  bool has_account(const Address& a) const { return accounts.contains(a); }

  const std::vector<Address>* roster(EpochIndex e, ShardId s) const {
    if (e >= epochs.size() || epochs[e].index != e) return nullptr;
    if (s >= epochs[e].rosters.size()) return nullptr;
    return &epochs[e].rosters[s];
  }

  RosterLookup roster_lookup() const {
    return [this](EpochIndex e, ShardId s) { return roster(e, s); };
  }

  std::vector<Address> guarantors() const {
    std::vector<Address> out;
    for (const auto& [addr, acct] : accounts)
      if (acct.kind == AccountKind::guarantor) out.push_back(addr);
    return out;
  }

  Amount withdrawals_in_flight() const {
    Amount sum = 0;
    for (const auto& [id, d] : deductions)
      if (d.status == DeductionStatus::deducted || d.status == DeductionStatus::certified)
        sum += d.token;
    return sum;
  }
};

inline Account account_from(const MembershipEntry& e) {
  Account a;
  a.addr = e.addr;
  a.kind = e.kind;
  if (e.kind == AccountKind::client)
    a.balance = e.deposit;
  else
    a.deposit = e.deposit;
  return a;
}

inline void admit_member(LedgerState& state, const MembershipEntry& entry) {
  if (state.accounts.contains(entry.addr))
    throw Error("duplicate membership address " + entry.addr.hex());
  state.accounts.emplace(entry.addr, account_from(entry));
  state.membership.push_back(entry);
}

// Clients get a spendable balance equal to their deposit; guarantors get a
// lockable deposit and a zero balance.
inline LedgerState bootstrap_from_membership(std::span<const MembershipEntry> membership,
                                             const SecurityParams& params) {
  LedgerState s;
  s.params = params;
  for (const auto& e : membership) admit_member(s, e);
  s.chains.resize(params.shard_count());
  for (std::size_t i = 0; i < s.chains.size(); ++i) s.chains[i].shard = static_cast<ShardId>(i);
  return s;
}

// ---------------------------------------------------------------------------
// Effects

inline void apply_effects(LedgerState& state, std::span<const Effect> effects) {
  // Validate everything first so a failing batch leaves no partial change.
  std::map<std::pair<Address, Bucket>, std::int64_t> net;
  for (const auto& e : effects) net[{e.account, e.bucket}] += e.delta;
  for (const auto& [key, delta] : net) {
    const auto& acct = state.account(key.first);
    auto current = static_cast<std::int64_t>(key.second == Bucket::balance ? acct.balance
                                                                           : acct.deposit);
    if (current + delta < 0) throw Error("effect would make an account negative");
    if (key.second == Bucket::deposit && current + delta < static_cast<std::int64_t>(acct.locked))
      throw Error("effect would drop a deposit below its locked amount");
  }
  for (const auto& [key, delta] : net) {
    auto& acct = state.account(key.first);
    auto& slot = key.second == Bucket::balance ? acct.balance : acct.deposit;
    slot = static_cast<Amount>(static_cast<std::int64_t>(slot) + delta);
  }
}

// ---------------------------------------------------------------------------
// Collateral

inline Amount lock_amount(const SecurityParams& p, Amount amount, Amount fee) {
  return p.collateral_ratio.ceil_of(amount + fee);
}

inline Outcome<Account> lock_capacity(LedgerState& state, const Address& guarantor,
                                      Amount amount) {
  auto it = state.accounts.find(guarantor);
  if (it == state.accounts.end()) return fail("unknown guarantor");
  auto& acct = it->second;
  if (acct.kind != AccountKind::guarantor) return fail("not a guarantor");
  if (acct.available_deposit() < amount) return fail("insufficient available deposit");
  acct.locked += amount;
  return acct;
}

inline Amount release_lock(LedgerState& state, const Digest& guarantee_id) {
  auto it = state.locks.find(guarantee_id);
  if (it == state.locks.end()) return 0;
  auto& acct = state.account(it->second.guarantor);
  Amount amount = std::min(it->second.amount, acct.locked);
  acct.locked -= amount;
  state.locks.erase(it);
  return amount;
}

// ---------------------------------------------------------------------------
// Settlement

// Fee split: the guarantor takes floor(fee * fee_share_guarantor); the rest is
// divided equally among the distinct group signers and the division remainder
// goes to the guarantor.
inline std::vector<Effect> settlement_effects(const Guarantee& g, const SecurityParams& p) {
  const auto& tx = g.txinfo();
  std::vector<Effect> out;
  out.push_back({tx.payer, Bucket::balance, -static_cast<std::int64_t>(tx.amount + tx.guarantee_fee)});
  out.push_back({tx.payee, Bucket::balance, static_cast<std::int64_t>(tx.amount)});
  if (tx.guarantee_fee == 0) return out;

  Amount guarantor_cut = p.fee_share_guarantor.floor_of(tx.guarantee_fee);
  Amount rest = tx.guarantee_fee - guarantor_cut;
  auto signers = g.gsig.signers();
  std::sort(signers.begin(), signers.end());
  signers.erase(std::unique(signers.begin(), signers.end()), signers.end());
  if (signers.empty()) {
    guarantor_cut += rest;
  } else {
    Amount each = rest / signers.size();
    guarantor_cut += rest % signers.size();
    if (each > 0)
      for (const auto& s : signers) out.push_back({s, Bucket::balance, static_cast<std::int64_t>(each)});
  }
  if (guarantor_cut > 0)
    out.push_back({g.guarantor(), Bucket::balance, static_cast<std::int64_t>(guarantor_cut)});
  return out;
}

// Requires the guarantee to be recorded in a payer-shard block.
inline Outcome<std::vector<Effect>> apply_settlement(LedgerState& state, const Guarantee& g) {
  const auto& tx = g.txinfo();
  if (!state.recorded.contains(g.id())) return fail("guarantee not recorded");
  if (state.settled.contains(g.id())) return fail("guarantee already settled");
  if (!state.has_account(tx.payer) || !state.has_account(tx.payee))
    return fail("unknown party");
  auto& payer = state.account(tx.payer);
  const Amount owed = tx.amount + tx.guarantee_fee;
  if (payer.balance < owed) return fail("payer balance insufficient at settlement");
  auto effects = settlement_effects(g, state.params);
  for (const auto& e : effects)
    if (!state.has_account(e.account)) return fail("settlement names unknown account");
  payer.reserved -= std::min(payer.reserved, owed);
  apply_effects(state, effects);
  state.settled.insert(g.id());
  return effects;
}

// ---------------------------------------------------------------------------
// Blocks

inline bool validate_record(const Record& rec, const Block& b, const LedgerState& state) {
  const auto lookup = state.roster_lookup();
  const unsigned s = state.params.shard_bits;
  return std::visit(
      [&](const auto& r) -> bool {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, GuaranteeRecord>) {
          const auto& g = r.guarantee;
          return verify_structure(g, lookup) && g.expectation().shard == b.shard &&
                 assign_tx_shard(g.txinfo().payer, s) == b.shard &&
                 g.expectation().covers(b.height);
        } else if constexpr (std::is_same_v<T, SettlementRecord>) {
          const auto& g = r.guarantee;
          return verify_structure(g, lookup) && r.payee_sig.signer() == g.txinfo().payee &&
                 verify(payee_claim_payload(g.id()), r.payee_sig) &&
                 assign_tx_shard(g.txinfo().payee, s) == b.shard;
        } else if constexpr (std::is_same_v<T, DeductionRecord>) {
          return verify_structure(r.check, lookup) && r.check.gsig.shard == b.shard &&
                 assign_tx_shard(r.check.request.addr, s) == b.shard;
        } else {
          return r.token > 0 && assign_tx_shard(r.addr, s) == b.shard;
        }
      },
      rec);
}

// Header hash, producer signature by the epoch roster of the shard, and every
// record. Linkage to the previous block is checked by append_record_block.
inline bool validate_block(const Block& b, const LedgerState& state) {
  if (compute_block_hash(b) != b.hash) return false;
  const auto* roster = state.roster(b.epoch, b.shard);
  if (roster == nullptr) return false;
  if (b.producer_gsig.epoch != b.epoch || b.producer_gsig.shard != b.shard) return false;
  if (!group_verify_strict(*roster, b.hash.view(), b.producer_gsig)) return false;
  return std::all_of(b.records.begin(), b.records.end(),
                     [&](const Record& r) { return validate_record(r, b, state); });
}

// Builds the next block of `shard` from the pending pool. Guarantees whose
// expectation window covers the new height are included, ones whose window
// has passed are dropped, and future ones stay pending.
inline Block produce_block(const LedgerState& state, ShardId shard, SimTime time,
                           std::vector<Record>& pending, std::span<const KeyPair> roster_keys) {
  const auto& chain = state.chains.at(shard);
  Block b;
  b.shard = shard;
  b.height = chain.blocks.empty() ? 0 : chain.tip_height() + 1;
  b.epoch = state.epoch().index;
  b.time = time;
  b.prev_hash = chain.tip_hash();

  std::vector<Record> keep;
  for (auto& rec : pending) {
    if (const auto* gr = std::get_if<GuaranteeRecord>(&rec)) {
      const auto& e = gr->guarantee.expectation();
      if (e.covers(b.height))
        b.records.push_back(std::move(rec));
      else if (e.height_min > b.height)
        keep.push_back(std::move(rec));
    } else {
      b.records.push_back(std::move(rec));
    }
  }
  pending = std::move(keep);
  b.hash = compute_block_hash(b);
  b.producer_gsig = group_sign(roster_keys, b.epoch, shard, b.hash.view());
  return b;
}

inline Status append_record_block(LedgerState& state, Block block) {
  auto& chain = state.chains.at(block.shard);
  Height expected = chain.blocks.empty() ? 0 : chain.tip_height() + 1;
  if (block.height != expected) return fail("non-consecutive block height");
  if (block.prev_hash != chain.tip_hash()) return fail("broken hash link");
  if (!validate_block(block, state)) return fail("block failed validation");
  for (const auto& rec : block.records)
    if (const auto* gr = std::get_if<GuaranteeRecord>(&rec))
      state.recorded.emplace(gr->guarantee.id(), block.height);
  chain.blocks.push_back(std::move(block));
  return Done{};
}

// Releases the locks of guarantees in `block` made by members of `group`.
// Only guarantees sitting in their payer's shard count.
inline Amount unlock_on_block(LedgerState& state, std::span<const Address> group,
                              const Block& block) {
  if (!validate_block(block, state)) return 0;
  Amount released = 0;
  for (const auto& rec : block.records) {
    const auto* gr = std::get_if<GuaranteeRecord>(&rec);
    if (gr == nullptr) continue;
    const auto& g = gr->guarantee;
    if (assign_tx_shard(g.txinfo().payer, state.params.shard_bits) != block.shard) continue;
    if (std::find(group.begin(), group.end(), g.guarantor()) == group.end()) continue;
    released += release_lock(state, g.id());
  }
  return released;
}

// ---------------------------------------------------------------------------
// Arbitration Chain

inline Digest compute_arbitration_hash(const ArbitrationBlock& b) {
  return hash_digest(arbitration_header_bytes(b));
}

// Proof of work is modelled as a seeded uniform lottery among guarantors.
// Each record releases the guarantee's lock, then the guarantor pays the
// compensation to the claimant and the punishment to the lottery winner,
// drawing on deposit before balance. What cannot be covered is a loss event.
template <typename Rng>
ArbitrationBlock append_arbitration_block(LedgerState& state,
                                          std::vector<ArbitrationRecord> records,
                                          std::span<const Address> guarantors, SimTime time,
                                          Rng& rng) {
  if (guarantors.empty()) throw Error("append_arbitration_block: no guarantors");
  ArbitrationBlock b;
  b.height = state.arbitration.size();
  b.time = time;
  b.prev_hash = state.arbitration.empty() ? Digest{} : state.arbitration.back().hash;
  b.producer = guarantors[uniform_below(rng, guarantors.size())];

  for (auto& rec : records) {
    rec.producer = b.producer;
    rec.effects.clear();
    rec.shortfall = 0;
    release_lock(state, rec.guarantee.id());
    const Address& offender = rec.guarantee.guarantor();
    auto& acct = state.account(offender);
    Amount deposit_left = acct.deposit - acct.locked;
    Amount balance_left = acct.balance;

    auto pay = [&](const Address& to, Amount owed) {
      Amount from_deposit = std::min(owed, deposit_left);
      deposit_left -= from_deposit;
      Amount from_balance = std::min(owed - from_deposit, balance_left);
      balance_left -= from_balance;
      if (from_deposit > 0)
        rec.effects.push_back({offender, Bucket::deposit, -static_cast<std::int64_t>(from_deposit)});
      if (from_balance > 0)
        rec.effects.push_back({offender, Bucket::balance, -static_cast<std::int64_t>(from_balance)});
      Amount paid = from_deposit + from_balance;
      if (paid > 0) rec.effects.push_back({to, Bucket::balance, static_cast<std::int64_t>(paid)});
      rec.shortfall += owed - paid;
    };
    pay(rec.claimant, rec.compensation_owed);
    pay(b.producer, rec.punishment_owed);
    apply_effects(state, rec.effects);
    state.arbitrated.insert(rec.guarantee.id());
    if (rec.shortfall > 0) state.losses.push_back({rec.guarantee.id(), offender, rec.shortfall});
  }
  b.records = std::move(records);
  b.hash = compute_arbitration_hash(b);
  state.arbitration.push_back(b);
  return b;
}

inline bool validate_arbitration_block(const ArbitrationBlock& b, const ArbitrationBlock* prev,
                                       const LedgerState& state) {
  if (compute_arbitration_hash(b) != b.hash) return false;
  if (prev == nullptr ? (b.height != 0 || b.prev_hash != Digest{})
                      : (b.height != prev->height + 1 || b.prev_hash != prev->hash))
    return false;
  const auto lookup = state.roster_lookup();
  for (const auto& r : b.records) {
    if (!verify_structure(r.guarantee, lookup)) return false;
    if (r.producer != b.producer) return false;
    std::int64_t net = 0;
    std::int64_t to_claimant = 0;
    for (const auto& e : r.effects) {
      net += e.delta;
      if (e.account == r.claimant && e.delta > 0) to_claimant += e.delta;
    }
    if (net != 0) return false;
    if (to_claimant > static_cast<std::int64_t>(r.compensation_owed)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayedAccount {
  std::int64_t balance = 0;
  std::int64_t deposit = 0;
  bool operator==(const ReplayedAccount&) const = default;
};

// Rebuilds balances and deposits from the membership list and the chains
// alone. Record order across shards does not matter: effects are additive.
inline std::map<Address, ReplayedAccount> replay_accounts(
    const SecurityParams& params, std::span<const MembershipEntry> membership,
    std::span<const RecordChain> chains, std::span<const ArbitrationBlock> arbitration) {
  std::map<Address, std::int64_t> balance, deposit;
  for (const auto& m : membership) {
    auto a = account_from(m);
    balance[m.addr] += static_cast<std::int64_t>(a.balance);
    deposit[m.addr] += static_cast<std::int64_t>(a.deposit);
  }
  auto apply = [&](const Effect& e) {
    (e.bucket == Bucket::balance ? balance : deposit)[e.account] += e.delta;
  };
  for (const auto& chain : chains)
    for (const auto& b : chain.blocks)
      for (const auto& rec : b.records) {
        if (const auto* s = std::get_if<SettlementRecord>(&rec)) {
          for (const auto& e : settlement_effects(s->guarantee, params)) apply(e);
        } else if (const auto* d = std::get_if<DeductionRecord>(&rec)) {
          apply({d->check.request.addr, Bucket::balance,
                 -static_cast<std::int64_t>(d->check.request.token)});
        } else if (const auto* r = std::get_if<RestoreRecord>(&rec)) {
          apply({r->addr, Bucket::balance, static_cast<std::int64_t>(r->token)});
        }
      }
  for (const auto& b : arbitration)
    for (const auto& r : b.records)
      for (const auto& e : r.effects) apply(e);

  std::map<Address, ReplayedAccount> out;
  for (const auto& [addr, v] : balance) out[addr].balance = v;
  for (const auto& [addr, v] : deposit) out[addr].deposit = v;
  return out;
}

}  // namespace pretrust
