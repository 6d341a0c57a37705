#pragma once

#include <map>
#include <string>
#include <vector>

#include "pretrust/pretrust.hpp"

namespace fixture {

using namespace pretrust;

inline KeyPair key(const std::string& label) { return keygen(seed_from("pretrust/fixture/" + label)); }
inline Address addr(const std::string& label) { return derive_address(key(label).pk); }

inline Address address_from_byte(std::uint8_t first) {
  Address a;
  a.bytes[0] = first;
  return a;
}

// A small internal ledger: `guarantors` guarantors with a deposit each, and
// named clients with a balance each. Epoch 0 and the genesis blocks exist.
struct World {
  SecurityParams params;
  LedgerState ledger;
  std::map<Address, KeyPair> keys;
  std::vector<Address> guarantor_addrs;
  GroupBook book;

  World(SecurityParams p, std::size_t guarantors, Amount deposit,
        const std::map<std::string, Amount>& clients)
      : params(p) {
    std::vector<MembershipEntry> members;
    for (std::size_t i = 0; i < guarantors; ++i) {
      auto kp = key("guarantor/" + std::to_string(i));
      auto a = derive_address(kp.pk);
      keys.emplace(a, kp);
      guarantor_addrs.push_back(a);
      members.push_back({a, AccountKind::guarantor, deposit, true});
    }
    for (const auto& [name, balance] : clients) {
      auto kp = key(name);
      keys.emplace(derive_address(kp.pk), kp);
      members.push_back({derive_address(kp.pk), AccountKind::client, balance, true});
    }
    ledger = bootstrap_from_membership(members, params);
    ledger.epochs.push_back(derive_epoch(0, genesis_global_hash(7), ledger.guarantors(), params.shard_bits));
    for (ShardId s = 0; s < params.shard_count(); ++s) {
      std::vector<Record> none;
      auto b = produce_block(ledger, s, 0, none, roster_keys(s));
      if (!append_record_block(ledger, b)) throw Error("fixture genesis failed");
    }
  }

  const KeyPair& kp(const std::string& client) const { return keys.at(derive_address(key(client).pk)); }
  const KeyPair& kp(const Address& a) const { return keys.at(a); }

  std::vector<KeyPair> roster_keys(ShardId s) const {
    std::vector<KeyPair> out;
    for (const auto& a : ledger.epoch().roster(s)) out.push_back(keys.at(a));
    return out;
  }

  ShardId shard_of_client(const std::string& client) const {
    return assign_tx_shard(addr(client), params.shard_bits);
  }

  Address elected(const TxInfo& tx, std::size_t rank = 0) const {
    auto order = elect_guarantor(ledger.epoch().roster(assign_tx_shard(tx.payer, params.shard_bits)), tx.id);
    return order.at(rank);
  }

  // Runs the handshake honestly and returns the sealed guarantee.
  Guarantee guarantee(const std::string& payer, const std::string& payee, Amount amount, Amount fee,
                      SimTime now = 100) {
    auto tx = assemble_txinfo(kp(payer), kp(payee), amount, fee, ledger.account(addr(payer)).next_txsn, 0).value();
    auto g_addr = elected(tx);
    auto pg1 = verify_txinfo(ledger, book, keys.at(g_addr), tx, now).value();
    auto pg2 = countersign_pre_guarantee1(kp(payer), pg1);
    auto shard = ledger.epoch().shard_of(g_addr).value();
    return group_generate_guarantee(ledger, book, shard, roster_keys(shard), pg2, now).value();
  }

  Status append(ShardId s, std::vector<Record> records, SimTime time = 1) {
    auto b = produce_block(ledger, s, time, records, roster_keys(s));
    return append_record_block(ledger, b);
  }
  Block append_block(ShardId s, std::vector<Record> records, SimTime time = 1) {
    auto b = produce_block(ledger, s, time, records, roster_keys(s));
    if (!append_record_block(ledger, b)) throw Error("append failed");
    return b;
  }
};

// Default parameters with a single shard, so every party lives in shard 0.
inline SecurityParams one_shard() {
  SecurityParams p;
  p.shard_bits = 0;
  return p;
}

}  // namespace fixture
