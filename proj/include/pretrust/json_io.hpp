#pragma once

#include <charconv>
#include <set>
#include <sstream>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pretrust/audit.hpp"
#include "pretrust/simulator.hpp"

// JSON forms of the scenario config, the metrics stream (JSON lines) and the
// state snapshot consumed by `audit`.
namespace pretrust {

using Json = nlohmann::ordered_json;

// ---- small helpers --------------------------------------------------------

inline std::string ratio_to_string(const Ratio& r) {
  return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

inline Ratio ratio_from_string(std::string_view s) {
  auto parse = [&](std::string_view part) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || end != part.data() + part.size() || part.empty())
      throw ConfigError("invalid ratio: " + std::string(s));
    return v;
  };
  auto slash = s.find('/');
  if (slash == std::string_view::npos) return Ratio{parse(s)};
  return Ratio{parse(s.substr(0, slash)), parse(s.substr(slash + 1))};
}

inline Ratio ratio_from_json(const Json& j) {
  if (j.is_string()) return ratio_from_string(j.get<std::string>());
  if (j.is_number_unsigned()) return Ratio{j.get<std::uint64_t>()};
  throw ConfigError("ratio must be an integer or a \"num/den\" string");
}

namespace detail {

// Reads optional keys into existing defaults and rejects unknown ones.
class Fields {
public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned())
          throw ConfigError(where_ + "." + key + " must be a non-negative integer");
      }
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown key " + where_ + "." + k);
  }

private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

// ---- SimConfig ------------------------------------------------------------

inline Json to_json(const SecurityParams& p) {
  return Json{{"shard_bits", p.shard_bits},
              {"blocks_per_epoch", p.blocks_per_epoch},
              {"collateral_ratio", ratio_to_string(p.collateral_ratio)},
              {"compensation_weight", ratio_to_string(p.compensation_weight)},
              {"punishment_weight", ratio_to_string(p.punishment_weight)},
              {"time_interval_ms", p.time_interval},
              {"fee_share_guarantor", ratio_to_string(p.fee_share_guarantor)},
              {"expectation_window", p.expectation_window},
              {"response_timeout_ms", p.response_timeout}};
}

inline SecurityParams security_params_from_json(const Json& j) {
  SecurityParams p;
  detail::Fields f(j, "params");
  f.get("shard_bits", p.shard_bits);
  f.get("blocks_per_epoch", p.blocks_per_epoch);
  if (auto* r = f.raw("collateral_ratio")) p.collateral_ratio = ratio_from_json(*r);
  if (auto* r = f.raw("compensation_weight")) p.compensation_weight = ratio_from_json(*r);
  if (auto* r = f.raw("punishment_weight")) p.punishment_weight = ratio_from_json(*r);
  f.get("time_interval_ms", p.time_interval);
  if (auto* r = f.raw("fee_share_guarantor")) p.fee_share_guarantor = ratio_from_json(*r);
  f.get("expectation_window", p.expectation_window);
  f.get("response_timeout_ms", p.response_timeout);
  f.finish();
  return p;
}

inline Json to_json(const SimConfig& c) {
  Json withdrawals = Json::array();
  for (const auto& w : c.workload.withdrawals)
    withdrawals.push_back({{"client", w.client}, {"token", w.token}, {"at_ms", w.at}});
  Json registrations = Json::array();
  for (const auto& r : c.workload.registrations)
    registrations.push_back(
        {{"at_ms", r.at}, {"deposit", r.deposit}, {"kind", std::string(to_string(r.kind))}});
  Json j{{"scenario", c.scenario},
         {"seed", c.seed},
         {"params", to_json(c.params)},
         {"guarantors", c.guarantors},
         {"clients", c.clients},
         {"guarantor_deposit", c.guarantor_deposit},
         {"client_deposit", c.client_deposit},
         {"external_reserve", c.external_reserve},
         {"latency_ms", {{"min", c.latency.min}, {"max", c.latency.max}}},
         {"public_chain_confirmation_delay_ms", c.public_chain_confirmation_delay},
         {"block_interval_ms", c.block_interval},
         {"duration_ms", c.duration},
         {"drain_limit_ms", c.drain_limit},
         {"adversary", nullptr},
         {"workload",
          {{"transactions", c.workload.transactions},
           {"first_tx_at_ms", c.workload.first_tx_at},
           {"tx_spacing_ms", c.workload.tx_spacing},
           {"amount_min", c.workload.amount_min},
           {"amount_max", c.workload.amount_max},
           {"fee", c.workload.fee},
           {"withdrawals", withdrawals},
           {"registrations", registrations}}}};
  if (c.adversary)
    j["adversary"] = {{"behavior", std::string(to_string(c.adversary->behavior))},
                      {"target", c.adversary->target}};
  return j;
}

// Missing keys keep their defaults; unknown keys are rejected. The latency
// model is either a fixed number of ms or {"min": a, "max": b}.
inline SimConfig sim_config_from_json(const Json& j) {
  SimConfig c;
  detail::Fields f(j, "config");
  f.get("scenario", c.scenario);
  f.get("seed", c.seed);
  if (auto* p = f.raw("params")) c.params = security_params_from_json(*p);
  f.get("guarantors", c.guarantors);
  f.get("clients", c.clients);
  f.get("guarantor_deposit", c.guarantor_deposit);
  f.get("client_deposit", c.client_deposit);
  f.get("external_reserve", c.external_reserve);
  if (auto* l = f.raw("latency_ms")) {
    if (l->is_number_unsigned()) {
      c.latency.min = c.latency.max = l->get<SimTime>();
    } else {
      detail::Fields lf(*l, "config.latency_ms");
      lf.get("min", c.latency.min);
      lf.get("max", c.latency.max);
      lf.finish();
      if (c.latency.max < c.latency.min) throw ConfigError("latency_ms.max below min");
    }
  }
  f.get("public_chain_confirmation_delay_ms", c.public_chain_confirmation_delay);
  f.get("block_interval_ms", c.block_interval);
  f.get("duration_ms", c.duration);
  f.get("drain_limit_ms", c.drain_limit);
  if (auto* a = f.raw("adversary"); a && !a->is_null()) {
    AdversaryProfile p;
    detail::Fields af(*a, "config.adversary");
    std::string behavior;
    af.get("behavior", behavior);
    af.get("target", p.target);
    af.finish();
    p.behavior = behavior_from(behavior);
    c.adversary = p;
  }
  if (auto* w = f.raw("workload")) {
    auto& wl = c.workload;
    detail::Fields wf(*w, "config.workload");
    wf.get("transactions", wl.transactions);
    wf.get("first_tx_at_ms", wl.first_tx_at);
    wf.get("tx_spacing_ms", wl.tx_spacing);
    wf.get("amount_min", wl.amount_min);
    wf.get("amount_max", wl.amount_max);
    wf.get("fee", wl.fee);
    if (auto* ws = wf.raw("withdrawals")) {
      if (!ws->is_array()) throw ConfigError("workload.withdrawals must be an array");
      for (const auto& e : *ws) {
        WithdrawalPlan plan;
        detail::Fields ef(e, "config.workload.withdrawals[]");
        ef.get("client", plan.client);
        ef.get("token", plan.token);
        ef.get("at_ms", plan.at);
        ef.finish();
        wl.withdrawals.push_back(plan);
      }
    }
    if (auto* rs = wf.raw("registrations")) {
      if (!rs->is_array()) throw ConfigError("workload.registrations must be an array");
      for (const auto& e : *rs) {
        RegistrationPlan plan;
        std::string kind = "guarantor";
        detail::Fields ef(e, "config.workload.registrations[]");
        ef.get("at_ms", plan.at);
        ef.get("deposit", plan.deposit);
        ef.get("kind", kind);
        ef.finish();
        try {
          plan.kind = account_kind_from(kind);
        } catch (const DecodeError& e) {
          throw ConfigError(e.what());
        }
        wl.registrations.push_back(plan);
      }
    }
    wf.finish();
  }
  f.finish();
  c.validate();
  return c;
}

// ---- Metrics (JSON lines) -------------------------------------------------

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json to_json(const TxMetric& t) {
  return Json{{"type", "tx"},
              {"index", t.index},
              {"id", t.id.hex()},
              {"payer", t.payer.hex()},
              {"payee", t.payee.hex()},
              {"amount", t.amount},
              {"fee", t.fee},
              {"created_ms", t.created},
              {"accepted_ms", optional_json(t.accepted)},
              {"guarantee_latency_ms", optional_json(t.latency())},
              {"guarantor", t.guarantor ? Json(t.guarantor->hex()) : Json(nullptr)},
              {"guarantor_rank", optional_json(t.guarantor_rank)},
              {"status", t.status},
              {"reason", t.reason},
              {"payee_credit", t.payee_credit},
              {"payer_debit", t.payer_debit},
              {"locked", t.locked},
              {"attacked", t.attacked}};
}

inline Json to_json(const WithdrawalMetric& w) {
  return Json{{"type", "withdrawal"},
              {"index", w.index},
              {"addr", w.addr.hex()},
              {"token", w.token},
              {"requested_ms", w.requested},
              {"status", w.status},
              {"reason", w.reason},
              {"external_credit", w.external_credit},
              {"restored", w.restored},
              {"attacked", w.attacked}};
}

inline Json to_json(const ArbitrationOutcome& a) {
  return Json{{"guarantee", a.id.hex()},     {"claimant", a.claimant.hex()},
              {"guarantor", a.guarantor.hex()}, {"producer", a.producer.hex()},
              {"compensation", a.compensation}, {"punishment", a.punishment},
              {"shortfall", a.shortfall}};
}

inline Json summary_json(const Metrics& m) {
  std::size_t accepted = 0, settled = 0;
  SimTime total = 0, max = 0;
  for (const auto& t : m.txs) {
    if (t.status == "settled") ++settled;
    if (auto l = t.latency()) {
      ++accepted;
      total += *l;
      max = std::max(max, *l);
    }
  }
  Json arbitrations = Json::array();
  for (const auto& a : m.arbitrations) arbitrations.push_back(to_json(a));
  Json histogram = Json::array();
  for (const auto& e : m.roster_histogram) histogram.push_back(e);
  Json mean = accepted ? Json(static_cast<double>(total) / static_cast<double>(accepted)) : Json(nullptr);
  return Json{{"type", "summary"},
              {"scenario", m.scenario},
              {"seed", m.seed},
              {"transactions", m.txs.size()},
              {"accepted", accepted},
              {"settled", settled},
              {"withdrawals", m.withdrawals.size()},
              {"mean_guarantee_latency_ms", mean},
              {"max_guarantee_latency_ms", accepted ? Json(max) : Json(nullptr)},
              {"on_chain_baseline_ms", m.on_chain_baseline},
              {"arbitrations", arbitrations},
              {"conservation_audit", m.audit},
              {"epoch_boundaries_checked", m.epoch_boundaries_checked},
              {"quiescent", m.quiescent},
              {"roster_histogram", histogram},
              {"events", m.events},
              {"trace_digest", m.trace_digest.hex()}};
}

inline void write_metrics(std::ostream& out, const Metrics& m) {
  for (const auto& t : m.txs) out << to_json(t).dump() << '\n';
  for (const auto& w : m.withdrawals) out << to_json(w).dump() << '\n';
  out << summary_json(m).dump() << '\n';
}

inline std::string metrics_jsonl(const Metrics& m) {
  std::ostringstream out;
  write_metrics(out, m);
  return out.str();
}

// ---- Snapshot -------------------------------------------------------------

struct Snapshot {
  LedgerState ledger;
  PublicChain chain;
  bool quiescent = false;
};

inline Json to_json(const MembershipEntry& m) {
  return Json{{"addr", m.addr.hex()},
              {"kind", std::string(to_string(m.kind))},
              {"deposit", m.deposit},
              {"active", m.active}};
}

inline std::string_view to_string(DeductionStatus s) {
  switch (s) {
    case DeductionStatus::deducted: return "deducted";
    case DeductionStatus::certified: return "certified";
    case DeductionStatus::redeemed: return "redeemed";
    case DeductionStatus::restored: return "restored";
  }
  return "unknown";
}

inline DeductionStatus deduction_status_from(std::string_view s) {
  for (auto d : {DeductionStatus::deducted, DeductionStatus::certified, DeductionStatus::redeemed,
                 DeductionStatus::restored})
    if (to_string(d) == s) return d;
  throw DecodeError("unknown deduction status: " + std::string(s));
}

inline Json snapshot_json(const LedgerState& ledger, const PublicChain& chain, bool quiescent) {
  Json membership = Json::array();
  for (const auto& m : ledger.membership) membership.push_back(to_json(m));
  Json accounts = Json::array();
  for (const auto& [a, acct] : ledger.accounts)
    accounts.push_back({{"addr", a.hex()},
                        {"kind", std::string(to_string(acct.kind))},
                        {"balance", acct.balance},
                        {"deposit", acct.deposit},
                        {"locked", acct.locked},
                        {"reserved", acct.reserved},
                        {"next_txsn", acct.next_txsn},
                        {"next_guarsn", acct.next_guarsn},
                        {"next_withdrawal_sn", acct.next_withdrawal_sn},
                        {"withdrawal_locked", acct.withdrawal_locked}});
  Json epochs = Json::array();
  for (const auto& e : ledger.epochs) {
    Json rosters = Json::array();
    for (const auto& r : e.rosters) {
      Json members = Json::array();
      for (const auto& a : r) members.push_back(a.hex());
      rosters.push_back(members);
    }
    epochs.push_back({{"index", e.index},
                      {"global_hash", e.global_hash.hex()},
                      {"rosters", rosters}});
  }
  Json chains = Json::array();
  for (const auto& c : ledger.chains) {
    Json blocks = Json::array();
    for (const auto& b : c.blocks) blocks.push_back(to_hex(encode(b)));
    chains.push_back(blocks);
  }
  Json arbitration = Json::array();
  for (const auto& b : ledger.arbitration) arbitration.push_back(to_hex(encode(b)));
  Json locks = Json::array();
  for (const auto& [id, l] : ledger.locks)
    locks.push_back({{"guarantee", id.hex()}, {"guarantor", l.guarantor.hex()}, {"amount", l.amount}});
  Json deductions = Json::array();
  for (const auto& [id, d] : ledger.deductions)
    deductions.push_back({{"request", id.hex()},
                          {"addr", d.addr.hex()},
                          {"token", d.token},
                          {"status", std::string(to_string(d.status))}});
  Json balances = Json::array();
  for (const auto& [a, v] : chain.balances()) balances.push_back({{"addr", a.hex()}, {"balance", v}});
  Json chain_membership = Json::array();
  for (const auto& m : chain.read_membership()) chain_membership.push_back(to_json(m));
  Json withdrawn = Json::array();
  for (const auto& w : chain.withdrawn_log())
    withdrawn.push_back({{"addr", w.addr.hex()},
                         {"token", w.token},
                         {"time_ms", w.time},
                         {"certification", w.certification.hex()}});
  return Json{{"type", "snapshot"},
              {"quiescent", quiescent},
              {"params", to_json(ledger.params)},
              {"membership", membership},
              {"accounts", accounts},
              {"epochs", epochs},
              {"record_chains", chains},
              {"arbitration_chain", arbitration},
              {"locks", locks},
              {"deductions", deductions},
              {"external",
               {{"tee_pk", chain.tee_pk().hex()},
                {"initial_supply", chain.initial_supply()},
                {"contract_balance", chain.contract_balance()},
                {"balances", balances},
                {"membership", chain_membership},
                {"withdrawn", withdrawn}}}};
}

inline Json snapshot_json(const Simulation& sim) {
  return snapshot_json(sim.ledger(), sim.chain(), sim.metrics().quiescent);
}

namespace detail {

inline MembershipEntry membership_from_json(const Json& j) {
  return MembershipEntry{Address::from_hex(j.at("addr").get<std::string>()),
                         account_kind_from(j.at("kind").get<std::string>()),
                         j.at("deposit").get<Amount>(), j.at("active").get<bool>()};
}

}  // namespace detail

// Throws DecodeError on malformed input.
inline Snapshot snapshot_from_json(const Json& j) {
  try {
    if (j.at("type") != "snapshot") throw DecodeError("not a snapshot document");
    Snapshot s;
    auto& L = s.ledger;
    s.quiescent = j.at("quiescent").get<bool>();
    L.params = security_params_from_json(j.at("params"));
    L.params.validate();
    for (const auto& m : j.at("membership")) L.membership.push_back(detail::membership_from_json(m));
    for (const auto& a : j.at("accounts")) {
      Account acct;
      acct.addr = Address::from_hex(a.at("addr").get<std::string>());
      acct.kind = account_kind_from(a.at("kind").get<std::string>());
      acct.balance = a.at("balance").get<Amount>();
      acct.deposit = a.at("deposit").get<Amount>();
      acct.locked = a.at("locked").get<Amount>();
      acct.reserved = a.at("reserved").get<Amount>();
      acct.next_txsn = a.at("next_txsn").get<Counter>();
      acct.next_guarsn = a.at("next_guarsn").get<Counter>();
      acct.next_withdrawal_sn = a.at("next_withdrawal_sn").get<Counter>();
      acct.withdrawal_locked = a.at("withdrawal_locked").get<bool>();
      if (!L.accounts.emplace(acct.addr, acct).second) throw DecodeError("duplicate account");
    }
    for (const auto& e : j.at("epochs")) {
      EpochState ep;
      ep.index = e.at("index").get<EpochIndex>();
      ep.global_hash = Digest::from_hex(e.at("global_hash").get<std::string>());
      for (const auto& r : e.at("rosters")) {
        std::vector<Address> members;
        for (const auto& a : r) members.push_back(Address::from_hex(a.get<std::string>()));
        ep.rosters.push_back(std::move(members));
      }
      L.epochs.push_back(std::move(ep));
    }
    const auto& chains = j.at("record_chains");
    if (chains.size() != L.params.shard_count()) throw DecodeError("record chain count mismatch");
    L.chains.resize(chains.size());
    for (std::size_t s = 0; s < chains.size(); ++s) {
      L.chains[s].shard = static_cast<ShardId>(s);
      for (const auto& h : chains[s]) {
        auto b = decode<Block>(from_hex(h.get<std::string>()));
        for (const auto& rec : b.records)
          if (const auto* g = std::get_if<GuaranteeRecord>(&rec)) L.recorded.emplace(g->guarantee.id(), b.height);
          else if (const auto* st = std::get_if<SettlementRecord>(&rec)) L.settled.insert(st->guarantee.id());
        L.chains[s].blocks.push_back(std::move(b));
      }
    }
    for (const auto& h : j.at("arbitration_chain")) {
      auto b = decode<ArbitrationBlock>(from_hex(h.get<std::string>()));
      for (const auto& r : b.records) L.arbitrated.insert(r.guarantee.id());
      L.arbitration.push_back(std::move(b));
    }
    for (const auto& l : j.at("locks"))
      L.locks[Digest::from_hex(l.at("guarantee").get<std::string>())] =
          LockEntry{Address::from_hex(l.at("guarantor").get<std::string>()), l.at("amount").get<Amount>()};
    for (const auto& d : j.at("deductions"))
      L.deductions[Digest::from_hex(d.at("request").get<std::string>())] =
          Deduction{Address::from_hex(d.at("addr").get<std::string>()), d.at("token").get<Amount>(),
                    deduction_status_from(d.at("status").get<std::string>())};

    const auto& ext = j.at("external");
    std::map<Address, Amount> balances;
    for (const auto& b : ext.at("balances"))
      balances[Address::from_hex(b.at("addr").get<std::string>())] = b.at("balance").get<Amount>();
    std::vector<MembershipEntry> chain_membership;
    for (const auto& m : ext.at("membership")) chain_membership.push_back(detail::membership_from_json(m));
    std::vector<WithdrawalLogEntry> withdrawn;
    for (const auto& w : ext.at("withdrawn"))
      withdrawn.push_back({Address::from_hex(w.at("addr").get<std::string>()), w.at("token").get<Amount>(),
                           w.at("time_ms").get<SimTime>(),
                           Digest::from_hex(w.at("certification").get<std::string>())});
    s.chain = PublicChain::restore(std::move(balances), ext.at("contract_balance").get<Amount>(),
                                   ext.at("initial_supply").get<Amount>(), std::move(chain_membership),
                                   PublicKey::from_hex(ext.at("tee_pk").get<std::string>()),
                                   std::move(withdrawn));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed snapshot: ") + e.what());
  } catch (const ConfigError& e) {
    throw DecodeError(std::string("malformed snapshot: ") + e.what());
  }
}

// Conservation, account bounds and chain integrity; replay as well when the
// snapshot was taken with every pool flushed into blocks.
inline AuditResult audit_snapshot(const Snapshot& s) {
  if (s.ledger.epochs.empty()) return Violation{"chain_integrity", "snapshot has no epochs"};
  if (auto v = audit_conservation(s.ledger, s.chain)) return v;
  if (auto v = audit_account_bounds(s.ledger)) return v;
  if (auto v = audit_chain_integrity(s.ledger)) return v;
  if (s.quiescent)
    if (auto v = audit_replay(s.ledger)) return v;
  return std::nullopt;
}

}  // namespace pretrust
