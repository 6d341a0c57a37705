#pragma once

#include <sodium.h>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pretrust/bytes.hpp"
#include "pretrust/common.hpp"

// SHA-256, Ed25519, addresses, and the threshold multi-signature that stands
// in for a consensus group's signature. Backed by libsodium.
namespace pretrust {

namespace detail {
inline void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}
}  // namespace detail

template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> bytes{};

  auto operator<=>(const FixedBytes&) const = default;
  bool operator==(const FixedBytes&) const = default;

  ByteView view() const noexcept { return {bytes.data(), bytes.size()}; }
  std::string hex() const { return to_hex(view()); }
  static FixedBytes from_hex(std::string_view h) { return {fixed_from_hex<N>(h)}; }
};

struct DigestTag {};
struct AddressTag {};
struct PublicKeyTag {};
struct SecretKeyTag {};
struct SigBytesTag {};
struct SeedTag {};

using Digest = FixedBytes<32, DigestTag>;
using Address = FixedBytes<20, AddressTag>;
using PublicKey = FixedBytes<crypto_sign_PUBLICKEYBYTES, PublicKeyTag>;
using SecretKey = FixedBytes<crypto_sign_SECRETKEYBYTES, SecretKeyTag>;
using SignatureBytes = FixedBytes<crypto_sign_BYTES, SigBytesTag>;
using Seed = FixedBytes<crypto_sign_SEEDBYTES, SeedTag>;

inline Digest hash_digest(ByteView data) {
  detail::ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

inline Digest hash_digest(std::string_view s) { return hash_digest(as_bytes(s)); }

// Incremental SHA-256.
class Hasher {
public:
  Hasher() {
    detail::ensure_sodium();
    crypto_hash_sha256_init(&state_);
  }
  Hasher& update(ByteView data) {
    crypto_hash_sha256_update(&state_, data.data(), data.size());
    return *this;
  }
  Hasher& update(std::string_view s) { return update(as_bytes(s)); }
  Digest finish() {
    Digest d;
    crypto_hash_sha256_final(&state_, d.bytes.data());
    return d;
  }

private:
  crypto_hash_sha256_state state_{};
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
  bool operator==(const KeyPair&) const = default;
};

inline KeyPair keygen(const Seed& seed) {
  detail::ensure_sodium();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.pk.bytes.data(), kp.sk.bytes.data(), seed.bytes.data());
  return kp;
}

inline Seed seed_from(std::string_view label) {
  return Seed{hash_digest(label).bytes};
}

inline Address derive_address(const PublicKey& pk) {
  auto h = hash_digest(pk.view());
  Address a;
  std::copy_n(h.bytes.begin(), Address::size, a.bytes.begin());
  return a;
}

// The signer's public key travels with the signature, so any holder of an
// address can check a signature without a key directory: the signer is the
// address derived from that key.
struct Signature {
  PublicKey signer_pk;
  SignatureBytes bytes;

  Address signer() const { return derive_address(signer_pk); }
  bool operator==(const Signature&) const = default;
};

inline Signature sign(const KeyPair& keys, ByteView message) {
  detail::ensure_sodium();
  Signature sig{keys.pk, {}};
  crypto_sign_detached(sig.bytes.bytes.data(), nullptr, message.data(), message.size(),
                       keys.sk.bytes.data());
  return sig;
}

inline bool verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  detail::ensure_sodium();
  if (sig.signer_pk != pk) return false;
  return crypto_sign_verify_detached(sig.bytes.bytes.data(), message.data(), message.size(),
                                     pk.bytes.data()) == 0;
}

// Verifies against the key embedded in the signature.
inline bool verify(ByteView message, const Signature& sig) {
  return verify(sig.signer_pk, message, sig);
}

// ⌈2n/3⌉, at least one.
constexpr std::size_t group_threshold(std::size_t roster_size) {
  return roster_size == 0 ? 1 : (2 * roster_size + 2) / 3;
}

struct GroupSignature {
  EpochIndex epoch = 0;
  ShardId shard = 0;
  std::vector<Signature> member_sigs;

  std::vector<Address> signers() const {
    std::vector<Address> out;
    out.reserve(member_sigs.size());
    for (const auto& s : member_sigs) out.push_back(s.signer());
    return out;
  }
  bool operator==(const GroupSignature&) const = default;
};

// Members sign the message bound to (epoch, shard) so a signature cannot be
// relabelled as coming from another roster.
inline Bytes group_payload(EpochIndex epoch, ShardId shard, ByteView message) {
  Writer w;
  w.str("pretrust.group").u64(epoch).u64(shard).bytes(message);
  return std::move(w).take();
}

inline GroupSignature group_sign(std::span<const KeyPair> roster, EpochIndex epoch,
                                 ShardId shard, ByteView message) {
  if (roster.empty()) throw Error("group_sign: empty roster");
  auto payload = group_payload(epoch, shard, message);
  GroupSignature g{epoch, shard, {}};
  g.member_sigs.reserve(roster.size());
  for (const auto& kp : roster) g.member_sigs.push_back(sign(kp, payload));
  return g;
}

// Counts valid signatures from distinct roster members; signatures from
// outsiders, duplicates, and invalid ones are ignored.
inline std::size_t count_valid_members(std::span<const Address> roster, ByteView message,
                                       const GroupSignature& gsig) {
  auto payload = group_payload(gsig.epoch, gsig.shard, message);
  std::set<Address> seen;
  for (const auto& s : gsig.member_sigs) {
    auto who = s.signer();
    if (std::find(roster.begin(), roster.end(), who) == roster.end()) continue;
    if (seen.contains(who)) continue;
    if (!verify(payload, s)) continue;
    seen.insert(who);
  }
  return seen.size();
}

inline bool group_verify(std::span<const Address> roster, std::size_t threshold,
                         ByteView message, const GroupSignature& gsig) {
  if (roster.empty()) return false;
  return count_valid_members(roster, message, gsig) >= threshold;
}

// Structural form used inside message validation: every listed signature
// must be a valid, distinct roster member, and there must be at least
// ⌈2n/3⌉ of them.
inline bool group_verify_strict(std::span<const Address> roster, ByteView message,
                                const GroupSignature& gsig) {
  if (roster.empty()) return false;
  if (gsig.member_sigs.size() < group_threshold(roster.size())) return false;
  return count_valid_members(roster, message, gsig) == gsig.member_sigs.size();
}

}  // namespace pretrust
