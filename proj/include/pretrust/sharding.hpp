#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pretrust/crypto.hpp"

namespace pretrust {

struct SecurityParams {
  unsigned shard_bits = 2;            // 2^s shards
  Height blocks_per_epoch = 4;        // n
  Ratio collateral_ratio{2};          // scalar kappa on (c + fee)
  Ratio compensation_weight{3, 2};
  Ratio punishment_weight{1, 2};
  SimTime time_interval = 60'000;     // withdrawal certificate validity
  Ratio fee_share_guarantor{1, 2};
  Height expectation_window = 2;      // delta in [h+1, h+1+delta]
  SimTime response_timeout = 200;     // fallback spacing between election candidates

  std::uint64_t shard_count() const { return std::uint64_t{1} << shard_bits; }

  // Throws ConfigError. The collateral inequality guarantees that an
  // arbitration payout always fits inside the lock taken for the guarantee.
  void validate() const {
    if (shard_bits > 16) throw ConfigError("shard_bits must be at most 16");
    if (blocks_per_epoch == 0) throw ConfigError("blocks_per_epoch must be positive");
    if (collateral_ratio.num == 0) throw ConfigError("collateral_ratio must be positive");
    if (compensation_weight.num == 0) throw ConfigError("compensation_weight must be positive");
    if (punishment_weight.num == 0) throw ConfigError("punishment_weight must be positive");
    if (time_interval == 0) throw ConfigError("time_interval must be positive");
    if (expectation_window == 0) throw ConfigError("expectation_window must be positive");
    if (response_timeout == 0) throw ConfigError("response_timeout must be positive");
    if (Ratio{1} < fee_share_guarantor) throw ConfigError("fee_share_guarantor must be <= 1");
    if (collateral_ratio < Ratio{1}) throw ConfigError("collateral_ratio must be >= 1");
    if (collateral_ratio < compensation_weight + punishment_weight)
      throw ConfigError(
          "collateral_ratio must cover compensation_weight + punishment_weight");
  }
};

// Integer formed by the k most significant bits of value.
inline std::uint64_t upper_bits(unsigned k, ByteView value) {
  if (k > 64) throw Error("upper_bits: k exceeds 64");
  if (k > value.size() * 8) throw Error("upper_bits: k exceeds value length");
  std::uint64_t out = 0;
  for (unsigned i = 0; i < k; ++i) {
    auto bit = (value[i / 8] >> (7 - i % 8)) & 1u;
    out = (out << 1) | bit;
  }
  return out;
}

// Hash of the bytewise xor-fold of one end-block hash per shard.
inline Digest compute_global_hash(std::span<const Digest> end_blocks, unsigned shard_bits) {
  if (end_blocks.size() != (std::size_t{1} << shard_bits))
    throw Error("compute_global_hash: expected one end block per shard");
  Digest fold;
  for (const auto& d : end_blocks)
    for (std::size_t i = 0; i < Digest::size; ++i) fold.bytes[i] ^= d.bytes[i];
  return hash_digest(fold.view());
}

// Width alignment: the 20-byte address is xored with the first 20 digest bytes.
inline Address xor_with_digest(const Address& addr, const Digest& d) {
  Address out;
  for (std::size_t i = 0; i < Address::size; ++i) out.bytes[i] = addr.bytes[i] ^ d.bytes[i];
  return out;
}

inline ShardId guarantor_shard(const Digest& global_hash, const Address& guarantor,
                               unsigned shard_bits) {
  auto mixed = xor_with_digest(guarantor, global_hash);
  return static_cast<ShardId>(upper_bits(shard_bits, mixed.view()));
}

using Rosters = std::vector<std::vector<Address>>;

inline Rosters assign_guarantor_shards(const Digest& global_hash,
                                       std::span<const Address> guarantors,
                                       unsigned shard_bits) {
  if (guarantors.empty()) throw Error("assign_guarantor_shards: no guarantors");
  Rosters rosters(std::size_t{1} << shard_bits);
  for (const auto& g : guarantors)
    rosters[guarantor_shard(global_hash, g, shard_bits)].push_back(g);
  for (auto& r : rosters) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }
  return rosters;
}

inline bool has_empty_shard(const Rosters& rosters) {
  return std::any_of(rosters.begin(), rosters.end(), [](const auto& r) { return r.empty(); });
}

inline ShardId assign_tx_shard(const Address& payer, unsigned shard_bits) {
  return static_cast<ShardId>(upper_bits(shard_bits, payer.view()));
}

// Roster ordered by ascending guaranteePriority = addr xor id (big-endian).
// Element 0 is the elected guarantor; the rest is the fallback order.
inline std::vector<Address> elect_guarantor(std::span<const Address> roster,
                                            const Digest& txinfo_id) {
  if (roster.empty()) throw Error("elect_guarantor: empty roster");
  std::vector<std::pair<Address, Address>> keyed;
  keyed.reserve(roster.size());
  for (const auto& a : roster) keyed.emplace_back(xor_with_digest(a, txinfo_id), a);
  std::sort(keyed.begin(), keyed.end());
  std::vector<Address> out;
  out.reserve(keyed.size());
  for (auto& [prio, addr] : keyed) out.push_back(addr);
  return out;
}

struct EpochState {
  EpochIndex index = 0;
  Digest global_hash;  // beacon value the rosters derive from
  Rosters rosters;

  const std::vector<Address>& roster(ShardId shard) const { return rosters.at(shard); }

  std::optional<ShardId> shard_of(const Address& guarantor) const {
    for (std::size_t s = 0; s < rosters.size(); ++s)
      if (std::binary_search(rosters[s].begin(), rosters[s].end(), guarantor))
        return static_cast<ShardId>(s);
    return std::nullopt;
  }

  bool operator==(const EpochState&) const = default;
};

// Rosters for one epoch. Xoring every address with the same beacon permutes
// the shard labels without changing which guarantors share a shard, so the
// set of occupied shards is fixed by the address prefixes alone. An empty
// shard therefore cannot be cured by rehashing the beacon; it is a
// configuration error.
inline EpochState derive_epoch(EpochIndex index, const Digest& global_hash,
                               std::span<const Address> guarantors, unsigned shard_bits) {
  if (guarantors.size() < (std::size_t{1} << shard_bits))
    throw ConfigError("fewer guarantors than shards");
  EpochState e{index, global_hash, assign_guarantor_shards(global_hash, guarantors, shard_bits)};
  if (has_empty_shard(e.rosters))
    throw ConfigError("guarantor address prefixes leave a shard without guarantors");
  return e;
}

inline Digest genesis_global_hash(std::uint64_t config_seed) {
  Writer w;
  w.str("pretrust.genesis").u64(config_seed);
  return hash_digest(w.data());
}

}  // namespace pretrust
