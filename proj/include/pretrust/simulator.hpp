#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pretrust/audit.hpp"
#include "pretrust/external_chain.hpp"
#include "pretrust/ledger.hpp"
#include "pretrust/protocol.hpp"
#include "pretrust/tee.hpp"

// Deterministic discrete-event simulation of the whole system: clients,
// guarantor groups, the TEE and the public chain exchange messages in
// virtual time. The only randomness is a std::mt19937_64 seeded from the
// config (its recurrence is fixed by the C++ standard), consumed through
// uniform_below.
namespace pretrust {

// Min-ordered by (time, sequence number); the sequence number breaks ties in
// scheduling order.
template <typename T>
class EventQueue {
public:
  void schedule_at(SimTime at, T payload) {
    if (at < now_) throw Error("cannot schedule an event in the past");
    heap_.push(Entry{at, seq_++, std::move(payload)});
  }
  void schedule(T payload, SimTime delay) { schedule_at(now_ + delay, std::move(payload)); }

  // nullopt marks end of run.
  std::optional<std::pair<SimTime, T>> next_event() {
    if (heap_.empty()) return std::nullopt;
    Entry e = heap_.top();
    heap_.pop();
    now_ = e.time;
    return std::make_pair(e.time, std::move(e.payload));
  }

  SimTime now() const noexcept { return now_; }
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }

private:
  struct Entry {
    SimTime time;
    std::uint64_t seq;
    T payload;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t seq_ = 0;
  SimTime now_ = 0;
};

struct LatencyModel {
  SimTime min = 10;  // per hop; min == max means fixed
  SimTime max = 10;

  template <typename Rng>
  SimTime draw(Rng& rng) const {
    if (max <= min) return min;
    return min + uniform_below(rng, max - min + 1);
  }
};

enum class Behavior {
  omit_guarantee_from_block,
  overspend_payer,
  replay_txSN,
  stale_epoch_gsig,
  expired_withdrawal_cert,
  silent_elected_guarantor,
};

enum class Role { client, guarantor };

inline Role behavior_role(Behavior b) {
  switch (b) {
    case Behavior::overspend_payer:
    case Behavior::replay_txSN:
    case Behavior::expired_withdrawal_cert:
      return Role::client;
    default:
      return Role::guarantor;
  }
}

inline std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::omit_guarantee_from_block: return "omit_guarantee_from_block";
    case Behavior::overspend_payer: return "overspend_payer";
    case Behavior::replay_txSN: return "replay_txSN";
    case Behavior::stale_epoch_gsig: return "stale_epoch_gsig";
    case Behavior::expired_withdrawal_cert: return "expired_withdrawal_cert";
    case Behavior::silent_elected_guarantor: return "silent_elected_guarantor";
  }
  return "unknown";
}

inline Behavior behavior_from(std::string_view s) {
  for (auto b : {Behavior::omit_guarantee_from_block, Behavior::overspend_payer,
                 Behavior::replay_txSN, Behavior::stale_epoch_gsig,
                 Behavior::expired_withdrawal_cert, Behavior::silent_elected_guarantor})
    if (to_string(b) == s) return b;
  throw ConfigError("unknown adversary behavior: " + std::string(s));
}

// `target` indexes the attacked transaction, or the attacked withdrawal for
// expired_withdrawal_cert.
struct AdversaryProfile {
  Behavior behavior = Behavior::omit_guarantee_from_block;
  std::size_t target = 0;
};

struct NodeRef {
  Role role = Role::client;
  Address addr;
};

// Honest nodes consult this at each trigger point; an entry replaces the
// honest action for the targeted transaction or withdrawal.
class AdversaryRegistry {
public:
  void inject(const AdversaryProfile& profile, const NodeRef& node) {
    if (behavior_role(profile.behavior) != node.role)
      throw ConfigError(std::string(to_string(profile.behavior)) + " does not apply to a " +
                        (node.role == Role::client ? "client" : "guarantor"));
    wrapped_[node.addr].push_back(profile);
  }

  bool active(const Address& node, Behavior b, std::size_t target) const {
    auto it = wrapped_.find(node);
    if (it == wrapped_.end()) return false;
    for (const auto& p : it->second)
      if (p.behavior == b && p.target == target) return true;
    return false;
  }

  bool empty() const noexcept { return wrapped_.empty(); }

private:
  std::map<Address, std::vector<AdversaryProfile>> wrapped_;
};

inline void inject_adversary(AdversaryRegistry& registry, const AdversaryProfile& profile,
                             const NodeRef& node) {
  registry.inject(profile, node);
}

struct WithdrawalPlan {
  std::size_t client = 0;
  Amount token = 0;
  SimTime at = 0;
};

struct RegistrationPlan {
  SimTime at = 0;
  Amount deposit = 0;
  AccountKind kind = AccountKind::guarantor;
};

struct Workload {
  std::size_t transactions = 12;
  SimTime first_tx_at = 1'200;
  SimTime tx_spacing = 1'000;
  Amount amount_min = 10;
  Amount amount_max = 100;
  Amount fee = 2;
  std::vector<WithdrawalPlan> withdrawals;
  std::vector<RegistrationPlan> registrations;
};

struct SimConfig {
  std::string scenario = "custom";
  std::uint64_t seed = 42;
  SecurityParams params;
  std::size_t guarantors = 16;
  std::size_t clients = 8;
  Amount guarantor_deposit = 10'000;
  Amount client_deposit = 1'000;
  Amount external_reserve = 500;  // public-chain balance kept outside the system
  LatencyModel latency;
  SimTime public_chain_confirmation_delay = 600'000;
  SimTime block_interval = 1'000;
  SimTime duration = 16'000;  // new block ticks stop after this unless work is outstanding
  SimTime drain_limit = 100'000;
  std::optional<AdversaryProfile> adversary;
  Workload workload;

  void validate() const {
    params.validate();
    if (guarantors == 0 || clients == 0) throw ConfigError("counts must be positive");
    if (clients < 2) throw ConfigError("at least two clients are needed to transact");
    if (guarantors < params.shard_count())
      throw ConfigError("guarantors must be at least the shard count");
    if (guarantor_deposit == 0 || client_deposit == 0)
      throw ConfigError("deposits must be positive");
    if (block_interval == 0) throw ConfigError("block_interval must be positive");
    if (workload.amount_min == 0 || workload.amount_min > workload.amount_max)
      throw ConfigError("invalid amount range");
    for (const auto& w : workload.withdrawals)
      if (w.client >= clients || w.token == 0) throw ConfigError("invalid withdrawal plan");
    for (const auto& r : workload.registrations)
      if (r.deposit == 0) throw ConfigError("invalid registration plan");
    if (adversary) {
      const auto& a = *adversary;
      if (a.behavior == Behavior::expired_withdrawal_cert) {
        if (a.target >= workload.withdrawals.size())
          throw ConfigError("adversary target withdrawal does not exist");
      } else if (a.target >= workload.transactions) {
        throw ConfigError("adversary target transaction does not exist");
      }
      if (a.behavior == Behavior::replay_txSN && a.target == 0)
        throw ConfigError("replay_txSN needs an earlier transaction to replay");
      if (a.behavior == Behavior::stale_epoch_gsig &&
          workload.first_tx_at + a.target * workload.tx_spacing <=
              params.blocks_per_epoch * block_interval)
        throw ConfigError("stale_epoch_gsig target must start after the first epoch");
    }
  }
};

struct TxMetric {
  std::size_t index = 0;
  Digest id;
  Address payer;
  Address payee;
  Amount amount = 0;
  Amount fee = 0;
  SimTime created = 0;
  std::optional<SimTime> accepted;
  std::optional<Address> guarantor;
  std::optional<std::size_t> guarantor_rank;
  std::string status = "pending";
  std::string reason;
  Amount payee_credit = 0;
  Amount payer_debit = 0;
  Amount locked = 0;
  bool attacked = false;

  std::optional<SimTime> latency() const {
    if (!accepted) return std::nullopt;
    return *accepted - created;
  }
};

struct WithdrawalMetric {
  std::size_t index = 0;
  Address addr;
  Amount token = 0;
  SimTime requested = 0;
  std::string status = "pending";
  std::string reason;
  Amount external_credit = 0;
  Amount restored = 0;
  bool attacked = false;
};

struct ArbitrationOutcome {
  Digest id;
  Address claimant;
  Address guarantor;
  Address producer;
  Amount compensation = 0;
  Amount punishment = 0;
  Amount shortfall = 0;
};

struct Metrics {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<TxMetric> txs;
  std::vector<WithdrawalMetric> withdrawals;
  std::vector<ArbitrationOutcome> arbitrations;
  SimTime on_chain_baseline = 0;
  std::string audit = "PASS";
  std::vector<std::vector<std::size_t>> roster_histogram;  // per epoch, per shard
  std::size_t epoch_boundaries_checked = 0;
  std::uint64_t events = 0;
  Digest trace_digest;
  bool quiescent = false;
};

class InvariantViolation : public Error {
public:
  InvariantViolation(std::string invariant, std::uint64_t event_index, const std::string& detail)
      : Error("invariant " + invariant + " violated at event " + std::to_string(event_index) +
              ": " + detail),
        invariant_(std::move(invariant)),
        event_index_(event_index) {}
  const std::string& invariant() const noexcept { return invariant_; }
  std::uint64_t event_index() const noexcept { return event_index_; }

private:
  std::string invariant_;
  std::uint64_t event_index_;
};

using TraceSink = std::function<void(SimTime, const std::string&)>;

class Simulation {
public:
  explicit Simulation(SimConfig cfg, TraceSink trace = {})
      : cfg_(std::move(cfg)), trace_(std::move(trace)), rng_(cfg_.seed), tee_(KeyPair{}) {
    cfg_.validate();
    genesis();
  }

  const Metrics& run() {
    while (auto ev = queue_.next_event()) {
      auto& [at, labeled] = *ev;
      ++event_index_;
      trace_hash_.update(std::to_string(at)).update(":").update(labeled.label).update("\n");
      if (labeled.label != "block_tick") --pending_work_;
      if (trace_) trace_(at, labeled.label);
      labeled.action();
    }
    finish();
    return metrics_;
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const LedgerState& ledger() const noexcept { return ledger_; }
  const PublicChain& chain() const noexcept { return chain_; }
  const TeeState& tee() const noexcept { return tee_; }
  const Metrics& metrics() const noexcept { return metrics_; }
  const AdversaryRegistry& adversaries() const noexcept { return adversaries_; }
  const std::vector<std::vector<Record>>& pending_pools() const noexcept { return pools_; }

  // Snapshot of the invariant checks (conservation, bounds, chain integrity,
  // certifications) as run at each epoch boundary.
  AuditResult audit_now() const {
    if (auto v = audit_conservation(ledger_, chain_)) return v;
    if (auto v = audit_account_bounds(ledger_)) return v;
    if (auto v = audit_chain_integrity(ledger_)) return v;
    return audit_certifications(tee_, ledger_);
  }

private:
  struct Labeled {
    std::string label;
    std::function<void()> action;
  };

  struct ClientNode {
    KeyPair keys;
    Address addr;
    Counter next_sn = 0;
    Counter last_sn = 0;
    bool has_last_sn = false;
    Counter next_payee_sn = 0;
    Counter next_withdrawal_sn = 0;
    PayerState payer;
    PayeeState payee;
  };

  struct TxPlan {
    std::size_t payer = 0;
    std::size_t payee = 0;
    Amount amount = 0;
    Amount fee = 0;
    SimTime at = 0;
  };

  struct TxRun {
    TxInfo txinfo;
    bool failed = false;
    bool pg2_seen = false;
    bool accepted = false;
    bool settled = false;
    bool arbitration_filed = false;
    bool arbitrated = false;
    std::optional<Guarantee> guarantee;
  };

  struct Claim {
    std::size_t tx = 0;
    Guarantee guarantee;
    Signature payee_sig;
  };

  // ---- scheduling -------------------------------------------------------

  void post(SimTime delay, std::string label, std::function<void()> fn) {
    ++pending_work_;
    queue_.schedule(Labeled{std::move(label), std::move(fn)}, delay);
  }

  void post_at(SimTime at, std::string label, std::function<void()> fn) {
    ++pending_work_;
    queue_.schedule_at(at, Labeled{std::move(label), std::move(fn)});
  }

  SimTime hop() { return cfg_.latency.draw(rng_); }
  SimTime now() const { return queue_.now(); }

  std::vector<KeyPair> roster_keys(const std::vector<Address>& roster) const {
    std::vector<KeyPair> out;
    out.reserve(roster.size());
    for (const auto& a : roster) out.push_back(guarantor_keys_.at(a));
    return out;
  }

  void violation(const Violation& v) {
    metrics_.audit = "FAIL: " + v.invariant;
    throw InvariantViolation(v.invariant, event_index_, v.detail);
  }

  // ---- genesis ----------------------------------------------------------

  static Seed node_seed(std::uint64_t seed, std::string_view role, std::size_t i) {
    return seed_from("pretrust/" + std::string(role) + "/" + std::to_string(seed) + "/" +
                     std::to_string(i));
  }

  void genesis() {
    const auto& p = cfg_.params;
    metrics_.scenario = cfg_.scenario;
    metrics_.seed = cfg_.seed;
    metrics_.on_chain_baseline = cfg_.public_chain_confirmation_delay;

    tee_ = TeeState(keygen(node_seed(cfg_.seed, "tee", 0)));
    std::map<Address, Amount> balances;
    std::vector<KeyPair> guarantor_list;
    for (std::size_t i = 0; i < cfg_.guarantors; ++i) {
      auto kp = keygen(node_seed(cfg_.seed, "guarantor", i));
      auto a = derive_address(kp.pk);
      if (guarantor_keys_.contains(a)) throw Error("address collision");
      guarantor_keys_.emplace(a, kp);
      guarantor_list.push_back(kp);
      balances[a] = cfg_.guarantor_deposit + cfg_.external_reserve;
    }
    for (std::size_t i = 0; i < cfg_.clients; ++i) {
      ClientNode c;
      c.keys = keygen(node_seed(cfg_.seed, "client", i));
      c.addr = derive_address(c.keys.pk);
      if (balances.contains(c.addr)) throw Error("address collision");
      balances[c.addr] = cfg_.client_deposit + cfg_.external_reserve;
      clients_.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < cfg_.workload.registrations.size(); ++i) {
      auto kp = keygen(node_seed(cfg_.seed, "registrant", i));
      auto a = derive_address(kp.pk);
      if (balances.contains(a)) throw Error("address collision");
      balances[a] = cfg_.workload.registrations[i].deposit + cfg_.external_reserve;
      registrant_keys_.push_back(kp);
    }
    chain_ = PublicChain(std::move(balances), tee_.keys.pk);

    auto register_one = [&](const KeyPair& kp, Amount deposit, AccountKind kind) {
      auto a = derive_address(kp.pk);
      auto st = chain_.register_account(a, deposit, kind,
                                        sign(kp, registration_payload(a, deposit, kind)), 0);
      if (!st) throw Error("genesis registration failed: " + st.failure().reason);
    };
    for (const auto& kp : guarantor_list)
      register_one(kp, cfg_.guarantor_deposit, AccountKind::guarantor);
    for (const auto& c : clients_) register_one(c.keys, cfg_.client_deposit, AccountKind::client);

    ledger_ = bootstrap_from_membership(chain_.read_membership(), p);
    ledger_.epochs.push_back(
        derive_epoch(0, genesis_global_hash(cfg_.seed), ledger_.guarantors(), p.shard_bits));
    record_histogram();
    pools_.assign(p.shard_count(), {});
    for (ShardId s = 0; s < p.shard_count(); ++s) {
      std::vector<Record> none;
      auto keys = roster_keys(ledger_.epoch().roster(s));
      auto b = produce_block(ledger_, s, 0, none, keys);
      if (auto st = append_record_block(ledger_, std::move(b)); !st)
        throw Error("genesis block rejected: " + st.failure().reason);
    }

    plan_transactions();
    for (std::size_t i = 0; i < plans_.size(); ++i) {
      metrics_.txs.push_back(TxMetric{});
      metrics_.txs.back().index = i;
      runs_.emplace_back();
      post_at(plans_[i].at, "tx_start#" + std::to_string(i), [this, i] { start_tx(i); });
    }
    for (std::size_t w = 0; w < cfg_.workload.withdrawals.size(); ++w) {
      const auto& plan = cfg_.workload.withdrawals[w];
      WithdrawalMetric m;
      m.index = w;
      m.addr = clients_[plan.client].addr;
      m.token = plan.token;
      m.requested = plan.at;
      metrics_.withdrawals.push_back(m);
      post_at(plan.at, "withdrawal_start#" + std::to_string(w), [this, w] { start_withdrawal(w); });
    }
    for (std::size_t r = 0; r < cfg_.workload.registrations.size(); ++r)
      post_at(cfg_.workload.registrations[r].at, "register#" + std::to_string(r),
              [this, r] { late_registration(r); });

    if (cfg_.adversary) inject_client_adversary(*cfg_.adversary);
    queue_.schedule_at(cfg_.block_interval, Labeled{"block_tick", [this] { block_tick(); }});
  }

  void plan_transactions() {
    const auto& w = cfg_.workload;
    for (std::size_t i = 0; i < w.transactions; ++i) {
      TxPlan t;
      t.payer = uniform_below(rng_, clients_.size());
      t.payee = uniform_below(rng_, clients_.size() - 1);
      if (t.payee >= t.payer) ++t.payee;
      t.amount = w.amount_min + uniform_below(rng_, w.amount_max - w.amount_min + 1);
      t.fee = w.fee;
      t.at = w.first_tx_at + i * w.tx_spacing;
      plans_.push_back(t);
    }
    if (cfg_.adversary && cfg_.adversary->behavior == Behavior::replay_txSN) {
      auto k = cfg_.adversary->target;
      plans_[k].payer = plans_[k - 1].payer;
      if (plans_[k].payee == plans_[k].payer) plans_[k].payee = (plans_[k].payer + 1) % clients_.size();
    }
  }

  void inject_client_adversary(const AdversaryProfile& a) {
    if (behavior_role(a.behavior) != Role::client) return;
    if (a.behavior == Behavior::expired_withdrawal_cert) {
      inject_adversary(adversaries_, a, {Role::client, clients_[cfg_.workload.withdrawals[a.target].client].addr});
      metrics_.withdrawals[a.target].attacked = true;
    } else {
      inject_adversary(adversaries_, a, {Role::client, clients_[plans_[a.target].payer].addr});
      metrics_.txs[a.target].attacked = true;
    }
  }

  void record_histogram() {
    std::vector<std::size_t> counts;
    for (const auto& r : ledger_.epoch().rosters) counts.push_back(r.size());
    metrics_.roster_histogram.push_back(std::move(counts));
  }

  // ---- guarantee flow ---------------------------------------------------

  void start_tx(std::size_t i) {
    const auto& plan = plans_[i];
    auto& payer = clients_[plan.payer];
    auto& payee = clients_[plan.payee];
    auto& m = metrics_.txs[i];
    m.payer = payer.addr;
    m.payee = payee.addr;
    m.fee = plan.fee;
    m.created = now();

    Amount amount = plan.amount;
    if (adversaries_.active(payer.addr, Behavior::overspend_payer, i))
      amount = ledger_.account(payer.addr).balance + 1;
    Counter sn = payer.next_sn;
    const bool replay =
        adversaries_.active(payer.addr, Behavior::replay_txSN, i) && payer.has_last_sn;
    if (replay) sn = payer.last_sn;
    m.amount = amount;

    auto tx = assemble_txinfo(payer.keys, payee.keys, amount, plan.fee, sn, payee.next_payee_sn);
    if (!tx) {
      m.status = "failed";
      m.reason = tx.failure().reason;
      return;
    }
    if (!replay) {
      payer.last_sn = sn;
      payer.has_last_sn = true;
      payer.next_sn += 1;
    }
    payee.next_payee_sn += 1;
    m.id = tx->id;
    runs_[i].txinfo = *tx;
    payer.payer.txs[tx->id] = PayerTx{*tx, now(), false};
    payee.payee.txs[tx->id] = PayeeTx{*tx, ledger_.epoch().index, false, 0};
    post(hop(), "txinfo->gP#" + std::to_string(i), [this, i] { deliver_txinfo(i); });
  }

  void deliver_txinfo(std::size_t i) {
    const auto& tx = runs_[i].txinfo;
    const ShardId shard = assign_tx_shard(tx.payer, cfg_.params.shard_bits);
    const auto order = elect_guarantor(ledger_.epoch().roster(shard), tx.id);
    if (cfg_.adversary && behavior_role(cfg_.adversary->behavior) == Role::guarantor &&
        cfg_.adversary->target == i) {
      inject_adversary(adversaries_, *cfg_.adversary, {Role::guarantor, order.front()});
      metrics_.txs[i].attacked = true;
    }
    for (std::size_t r = 0; r < order.size(); ++r)
      post(r * cfg_.params.response_timeout,
           "candidate#" + std::to_string(i) + "/" + std::to_string(r),
           [this, i, g = order[r], r] { candidate_respond(i, g, r); });
  }

  void candidate_respond(std::size_t i, const Address& guarantor, std::size_t rank) {
    auto& run = runs_[i];
    if (run.failed || run.pg2_seen || ledger_.sealed.contains(run.txinfo.id)) return;
    if (adversaries_.active(guarantor, Behavior::silent_elected_guarantor, i)) return;
    const auto& tx = run.txinfo;
    if (ledger_.account(guarantor).available_deposit() <
        lock_amount(cfg_.params, tx.amount, tx.guarantee_fee))
      return;  // not qualified; the next candidate answers after its timeout
    auto pg1 = verify_txinfo(ledger_, book_, guarantor_keys_.at(guarantor), tx, now());
    auto& m = metrics_.txs[i];
    if (!pg1) {
      if (pg1.failure().reason == "guarantor already answered" ||
          pg1.failure().reason == "guarantor not in payer shard group")
        return;
      run.failed = true;
      m.status = "rejected";
      m.reason = pg1.failure().reason;
      const auto payer_idx = plans_[i].payer;
      post(hop(), "txinfo_refused->P#" + std::to_string(i), [this, payer_idx] {
        auto& c = clients_[payer_idx];
        c.next_sn = ledger_.account(c.addr).next_txsn;
      });
      return;
    }
    m.guarantor = guarantor;
    m.guarantor_rank = rank;
    post(hop(), "pg1->P#" + std::to_string(i), [this, i, pg = std::move(pg1).value()] {
      deliver_pg1(i, pg);
    });
  }

  void deliver_pg1(std::size_t i, const PreGuarantee1& pg1) {
    auto& payer = clients_[plans_[i].payer];
    auto pg2 = payer_counter_sign(payer.payer, payer.keys, ledger_, pg1, now());
    if (!pg2) {
      if (trace_) trace_(now(), "payer refused PreGuarantee1: " + pg2.failure().reason);
      return;
    }
    post(hop(), "pg2->G#" + std::to_string(i), [this, i, pg = std::move(pg2).value()] {
      deliver_pg2_to_guarantor(i, pg);
    });
  }

  void deliver_pg2_to_guarantor(std::size_t i, const PreGuarantee2& pg2) {
    const auto& g_addr = pg2.pg1.guarantor;
    if (adversaries_.active(g_addr, Behavior::stale_epoch_gsig, i)) {
      // Forged with the previous epoch's roster instead of asking g_G.
      runs_[i].pg2_seen = true;
      const auto& old = ledger_.epochs.at(ledger_.epoch().index - 1);
      const auto shard = old.shard_of(g_addr).value();
      auto keys = roster_keys(old.roster(shard));
      auto forged = seal_guarantee(keys, old.index, shard, pg2);
      const SimTime delay = hop() + hop();
      post(delay, "forged_guarantee->P#" + std::to_string(i), [this, i, forged] {
        deliver_guarantee_to_payer(i, forged);
      });
      return;
    }
    post(hop(), "pg2->gG#" + std::to_string(i), [this, i, pg2] { deliver_pg2_to_group(i, pg2); });
  }

  void deliver_pg2_to_group(std::size_t i, const PreGuarantee2& pg2) {
    auto& run = runs_[i];
    run.pg2_seen = true;
    auto& m = metrics_.txs[i];
    const auto shard = ledger_.epoch().shard_of(pg2.pg1.guarantor);
    if (!shard) {
      m.status = "failed";
      m.reason = "guarantor left every roster";
      return;
    }
    auto keys = roster_keys(ledger_.epoch().roster(*shard));
    auto g = group_generate_guarantee(ledger_, book_, *shard, keys, pg2, now());
    if (!g) {
      if (m.status == "pending") {
        m.status = "failed";
        m.reason = g.failure().reason;
      }
      return;
    }
    m.locked = ledger_.locks.at(g->id()).amount;
    const ShardId payer_shard = g->expectation().shard;
    if (!adversaries_.active(pg2.pg1.guarantor, Behavior::omit_guarantee_from_block, i))
      pools_[payer_shard].push_back(GuaranteeRecord{*g});
    post(hop(), "guarantee->P#" + std::to_string(i), [this, i, gg = std::move(g).value()] {
      deliver_guarantee_to_payer(i, gg);
    });
  }

  void deliver_guarantee_to_payer(std::size_t i, const Guarantee& g) {
    post(hop(), "guarantee->P'#" + std::to_string(i), [this, i, g] { deliver_guarantee_to_payee(i, g); });
  }

  void deliver_guarantee_to_payee(std::size_t i, const Guarantee& g) {
    auto& payee = clients_[plans_[i].payee];
    auto& m = metrics_.txs[i];
    auto& run = runs_[i];
    if (!payee_verify(payee.payee, ledger_, g, now())) {
      m.status = "rejected_by_payee";
      m.reason = "guarantee failed payee verification";
      return;
    }
    run.accepted = true;
    run.guarantee = g;
    m.accepted = now();
    m.status = "accepted";
    auto sig = sign(payee.keys, payee_claim_payload(g.id()));
    post(hop(), "claim->gP'#" + std::to_string(i), [this, i, g, sig] {
      claims_[g.id()] = Claim{i, g, sig};
      try_settle(g.id());
    });
  }

  void try_settle(const Digest& id) {
    auto c = claims_.find(id);
    if (c == claims_.end() || !ledger_.recorded.contains(id) || ledger_.settled.contains(id)) return;
    auto& m = metrics_.txs[c->second.tx];
    auto effects = apply_settlement(ledger_, c->second.guarantee);
    if (!effects) {
      m.reason = effects.failure().reason;
      return;
    }
    const auto& tx = c->second.guarantee.txinfo();
    pools_[assign_tx_shard(tx.payee, cfg_.params.shard_bits)].push_back(
        SettlementRecord{c->second.guarantee, c->second.payee_sig});
    m.status = "settled";
    m.payee_credit = tx.amount;
    m.payer_debit = tx.amount + tx.guarantee_fee;
    runs_[c->second.tx].settled = true;
  }

  void file_arbitration_for(std::size_t i) {
    auto& run = runs_[i];
    auto& m = metrics_.txs[i];
    const auto& g = *run.guarantee;
    auto rec = file_arbitration(ledger_, g.txinfo().payee, g);
    if (!rec) {
      m.reason = rec.failure().reason;
      return;
    }
    auto lottery = ledger_.guarantors();
    std::erase(lottery, g.guarantor());
    auto block = append_arbitration_block(ledger_, {std::move(rec).value()}, lottery, now(), rng_);
    const auto& r = block.records.front();
    ArbitrationOutcome out{g.id(), r.claimant, g.guarantor(), r.producer, 0, 0, r.shortfall};
    for (const auto& e : r.effects) {
      if (e.delta <= 0) continue;
      if (e.account == r.claimant) out.compensation += static_cast<Amount>(e.delta);
      else if (e.account == r.producer) out.punishment += static_cast<Amount>(e.delta);
    }
    metrics_.arbitrations.push_back(out);
    run.arbitrated = true;
    m.status = "arbitrated";
    m.payee_credit = out.compensation;
  }

  // ---- withdrawal flow --------------------------------------------------

  void start_withdrawal(std::size_t w) {
    const auto& plan = cfg_.workload.withdrawals[w];
    auto& c = clients_[plan.client];
    auto req = make_withdrawal_request(c.keys, plan.token, c.next_withdrawal_sn++);
    post(hop(), "withdrawal_request->g#" + std::to_string(w), [this, w, req] {
      deliver_withdrawal_request(w, req);
    });
  }

  void deliver_withdrawal_request(std::size_t w, const WithdrawalRequest& req) {
    auto& m = metrics_.withdrawals[w];
    const ShardId shard = assign_tx_shard(req.addr, cfg_.params.shard_bits);
    auto keys = roster_keys(ledger_.epoch().roster(shard));
    auto check = handle_withdrawal_request(ledger_, shard, keys, req);
    if (!check) {
      m.status = "rejected";
      m.reason = check.failure().reason;
      auto& c = clients_[cfg_.workload.withdrawals[w].client];
      c.next_withdrawal_sn = ledger_.account(c.addr).next_withdrawal_sn;
      return;
    }
    pools_[shard].push_back(DeductionRecord{*check});
    post(hop(), "check->TEE#" + std::to_string(w), [this, w, ck = std::move(check).value()] {
      deliver_check_to_tee(w, ck);
    });
  }

  void deliver_check_to_tee(std::size_t w, const WithdrawalCheck& check) {
    auto& m = metrics_.withdrawals[w];
    if (auto st = tee_submit_check(tee_, ledger_, check); !st) {
      m.status = "rejected";
      m.reason = st.failure().reason;
      return;
    }
    post(0, "tee_certify#" + std::to_string(w), [this, w, addr = check.request.addr] {
      tee_certify_step(w, addr);
    });
  }

  void tee_certify_step(std::size_t w, const Address& addr) {
    auto& m = metrics_.withdrawals[w];
    std::vector<RestoreRecord> comps;
    auto cert = tee_certify(tee_, ledger_, addr, now(), &comps);
    for (auto& r : comps) {
      pools_[assign_tx_shard(r.addr, cfg_.params.shard_bits)].push_back(r);
      m.restored += r.token;
    }
    if (!cert) {
      m.status = "rejected";
      m.reason = cert.failure().reason;
      return;
    }
    m.status = "certified";
    const auto request_id = cert->request_id;
    post_at(cert->time + cfg_.params.time_interval + 1, "cert_expiry#" + std::to_string(w),
            [this, w, request_id] { expiry_check(w, request_id); });
    post(hop(), "cert->client#" + std::to_string(w), [this, w, c = std::move(cert).value()] {
      const SimTime delay =
          adversaries_.active(c.addr, Behavior::expired_withdrawal_cert, w)
              ? cfg_.params.time_interval + 1
              : 0;
      post(delay, "withdraw_call#" + std::to_string(w), [this, w, c] { submit_withdraw(w, c); });
    });
  }

  void submit_withdraw(std::size_t w, const WithdrawalCertification& cert) {
    auto& m = metrics_.withdrawals[w];
    auto st = chain_.withdraw(cert, now(), cfg_.params.time_interval);
    if (!st) {
      if (m.status != "restored") m.status = "refused_on_chain";
      m.reason = st.failure().reason;
      return;
    }
    ledger_.deductions.at(cert.request_id).status = DeductionStatus::redeemed;
    moot_expiries_.insert(cert.request_id);
    m.status = "redeemed";
    m.external_credit = cert.token;
  }

  void expiry_check(std::size_t w, const Digest& request_id) {
    if (moot_expiries_.erase(request_id) > 0) return;
    if (auto r = tee_expire(tee_, ledger_, chain_, request_id, now())) {
      pools_[assign_tx_shard(r->addr, cfg_.params.shard_bits)].push_back(*r);
      metrics_.withdrawals[w].restored += r->token;
      metrics_.withdrawals[w].status = "restored";
    }
  }

  void late_registration(std::size_t r) {
    const auto& plan = cfg_.workload.registrations[r];
    const auto& kp = registrant_keys_[r];
    auto a = derive_address(kp.pk);
    auto st = chain_.register_account(a, plan.deposit, plan.kind,
                                      sign(kp, registration_payload(a, plan.deposit, plan.kind)),
                                      now());
    if (!st) return;
    admit_member(ledger_, chain_.read_membership().back());
    if (plan.kind == AccountKind::guarantor) guarantor_keys_.emplace(a, kp);
  }

  // ---- blocks and epochs ------------------------------------------------

  void block_tick() {
    const auto& p = cfg_.params;
    const Height end = epoch_end_height(p, ledger_.epoch().index);
    for (ShardId s = 0; s < p.shard_count(); ++s) {
      if (ledger_.chains[s].tip_height() >= end) continue;  // idle until the boundary
      auto keys = roster_keys(ledger_.epoch().roster(s));
      auto b = produce_block(ledger_, s, now(), pools_[s], keys);
      auto copy = b;
      if (auto st = append_record_block(ledger_, std::move(b)); !st)
        violation({"block_validity", st.failure().reason});
      after_block(copy);
    }
    expire_admissions(ledger_, book_);
    watch_for_arbitration();

    bool boundary = true;
    for (const auto& c : ledger_.chains) boundary = boundary && c.tip_height() == end;
    if (boundary) {
      if (auto v = audit_now()) violation(*v);
      ++metrics_.epoch_boundaries_checked;
      epoch_tick(ledger_);
      record_histogram();
    }

    const bool more_time = now() < cfg_.duration;
    const bool within_drain = now() < cfg_.duration + cfg_.drain_limit;
    if (more_time || (within_drain && outstanding()))
      queue_.schedule(Labeled{"block_tick", [this] { block_tick(); }}, cfg_.block_interval);
  }

  void after_block(const Block& b) {
    for (const auto& roster : ledger_.epoch().rosters) unlock_on_block(ledger_, roster, b);
    for (const auto& rec : b.records)
      if (const auto* g = std::get_if<GuaranteeRecord>(&rec)) try_settle(g->guarantee.id());
  }

  void watch_for_arbitration() {
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      auto& run = runs_[i];
      if (!run.accepted || run.settled || run.arbitrated || run.arbitration_filed) continue;
      const auto& g = *run.guarantee;
      if (ledger_.recorded.contains(g.id())) continue;
      const auto& e = g.expectation();
      if (ledger_.chains.at(e.shard).tip_height() < e.height_max) continue;
      run.arbitration_filed = true;
      post(hop(), "arbitration#" + std::to_string(i), [this, i] { file_arbitration_for(i); });
    }
  }

  bool outstanding() const {
    // Expiry timers of redeemed certificates still sit in the queue but
    // cannot change anything.
    if (pending_work_ > static_cast<std::int64_t>(moot_expiries_.size())) return true;
    for (const auto& pool : pools_)
      if (!pool.empty()) return true;
    if (!book_.admissions.empty()) return true;
    for (const auto& run : runs_)
      if (run.accepted && !run.settled && !run.arbitrated) return true;
    return ledger_.withdrawals_in_flight() > 0 && !tee_.pending.empty();
  }

  void finish() {
    bool pools_empty = true;
    for (const auto& pool : pools_) pools_empty = pools_empty && pool.empty();
    metrics_.quiescent = pools_empty && book_.admissions.empty() && !outstanding();
    if (auto v = audit_now()) violation(*v);
    if (metrics_.quiescent)
      if (auto v = audit_replay(ledger_)) violation(*v);
    metrics_.events = event_index_;
    metrics_.trace_digest = trace_hash_.finish();
  }

  SimConfig cfg_;
  TraceSink trace_;
  std::mt19937_64 rng_;
  EventQueue<Labeled> queue_;
  std::uint64_t event_index_ = 0;
  std::int64_t pending_work_ = 0;
  Hasher trace_hash_;

  PublicChain chain_;
  LedgerState ledger_;
  TeeState tee_;
  GroupBook book_;
  AdversaryRegistry adversaries_;
  std::map<Address, KeyPair> guarantor_keys_;
  std::vector<KeyPair> registrant_keys_;
  std::vector<ClientNode> clients_;
  std::vector<TxPlan> plans_;
  std::vector<TxRun> runs_;
  std::map<Digest, Claim> claims_;
  std::set<Digest> moot_expiries_;
  std::vector<std::vector<Record>> pools_;
  Metrics metrics_;
};

}  // namespace pretrust
