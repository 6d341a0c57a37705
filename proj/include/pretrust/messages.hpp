#pragma once

#include <functional>
#include <vector>

#include "pretrust/bytes.hpp"
#include "pretrust/crypto.hpp"

// The guarantee handshake (TxInfo -> PreGuarantee1 -> PreGuarantee2 ->
// Guarantee), the withdrawal messages, and their canonical byte encoding.
// Every signature in this file is taken over canonical bytes prefixed with a
// domain tag naming the message and the signing role.
namespace pretrust {

// Resolves the guarantor roster of (epoch, shard); nullptr when unknown.
using RosterLookup = std::function<const std::vector<Address>*(EpochIndex, ShardId)>;

struct TxInfo {
  Address payer;
  Address payee;
  Amount amount = 0;
  Amount guarantee_fee = 0;
  Counter payer_sn = 0;
  Counter payee_sn = 0;
  Signature payer_sig;
  Signature payee_sig;
  Digest id;

  bool operator==(const TxInfo&) const = default;
};

struct BlockExpectation {
  ShardId shard = 0;
  Height height_min = 0;
  Height height_max = 0;

  bool covers(Height h) const noexcept { return h >= height_min && h <= height_max; }
  bool operator==(const BlockExpectation&) const = default;
};

struct PreGuarantee1 {
  TxInfo txinfo;
  Counter guar_sn = 0;
  BlockExpectation expectation;
  Address guarantor;
  Signature guarantor_sig;

  bool operator==(const PreGuarantee1&) const = default;
};

struct PreGuarantee2 {
  PreGuarantee1 pg1;
  Signature payer_sig;

  bool operator==(const PreGuarantee2&) const = default;
};

struct Guarantee {
  PreGuarantee2 pg2;
  GroupSignature gsig;

  const TxInfo& txinfo() const noexcept { return pg2.pg1.txinfo; }
  const Address& guarantor() const noexcept { return pg2.pg1.guarantor; }
  const BlockExpectation& expectation() const noexcept { return pg2.pg1.expectation; }
  const Digest& id() const noexcept { return pg2.pg1.txinfo.id; }
  bool operator==(const Guarantee&) const = default;
};

struct WithdrawalRequest {
  Address addr;
  Amount token = 0;
  Counter serial = 0;
  Signature sig;

  bool operator==(const WithdrawalRequest&) const = default;
};

struct WithdrawalCheck {
  WithdrawalRequest request;
  GroupSignature gsig;

  bool operator==(const WithdrawalCheck&) const = default;
};

struct WithdrawalCertification {
  SimTime time = 0;
  Address addr;
  Amount token = 0;
  Digest request_id;
  Signature tee_sig;

  bool operator==(const WithdrawalCertification&) const = default;
};

// ---------------------------------------------------------------------------
// Encoding

inline Bytes encode(const Signature& s) {
  Writer w;
  w.bytes(s.signer_pk.bytes).bytes(s.bytes.bytes);
  return std::move(w).take();
}

inline Bytes encode(const GroupSignature& g) {
  Writer w;
  w.u64(g.epoch).u64(g.shard).count(g.member_sigs.size());
  for (const auto& s : g.member_sigs) w.bytes(encode(s));
  return std::move(w).take();
}

inline Bytes encode(const TxInfo& t) {
  Writer w;
  w.bytes(t.payer.bytes)
      .bytes(t.payee.bytes)
      .u64(t.amount)
      .u64(t.payer_sn)
      .u64(t.guarantee_fee)
      .u64(t.payee_sn)
      .bytes(encode(t.payer_sig))
      .bytes(encode(t.payee_sig))
      .bytes(t.id.bytes);
  return std::move(w).take();
}

inline void encode_expectation(Writer& w, const BlockExpectation& e) {
  w.u64(e.shard).u64(e.height_min).u64(e.height_max);
}

inline Bytes encode(const PreGuarantee1& p) {
  Writer w;
  w.bytes(encode(p.txinfo)).u64(p.guar_sn);
  encode_expectation(w, p.expectation);
  w.bytes(p.guarantor.bytes).bytes(encode(p.guarantor_sig));
  return std::move(w).take();
}

inline Bytes encode(const PreGuarantee2& p) {
  Writer w;
  w.bytes(encode(p.pg1)).bytes(encode(p.payer_sig));
  return std::move(w).take();
}

inline Bytes encode(const Guarantee& g) {
  Writer w;
  w.bytes(encode(g.pg2)).bytes(encode(g.gsig));
  return std::move(w).take();
}

inline Bytes encode(const WithdrawalRequest& r) {
  Writer w;
  w.bytes(r.addr.bytes).u64(r.token).u64(r.serial).bytes(encode(r.sig));
  return std::move(w).take();
}

inline Bytes encode(const WithdrawalCheck& c) {
  Writer w;
  w.bytes(encode(c.request)).bytes(encode(c.gsig));
  return std::move(w).take();
}

inline Bytes encode(const WithdrawalCertification& c) {
  Writer w;
  w.u64(c.time).bytes(c.addr.bytes).u64(c.token).bytes(c.request_id.bytes).bytes(
      encode(c.tee_sig));
  return std::move(w).take();
}

template <typename T>
T decode(ByteView data);

namespace detail {

template <typename T>
T read_fixed(Reader& r) {
  return T{r.fixed<T::size>()};
}

inline Signature read_signature(Reader& outer) {
  Reader r(outer.field());
  Signature s;
  s.signer_pk = read_fixed<PublicKey>(r);
  s.bytes = read_fixed<SignatureBytes>(r);
  r.expect_end();
  return s;
}

inline BlockExpectation read_expectation(Reader& r) {
  BlockExpectation e;
  auto shard = r.u64();
  if (shard > UINT32_MAX) throw DecodeError("shard index out of range");
  e.shard = static_cast<ShardId>(shard);
  e.height_min = r.u64();
  e.height_max = r.u64();
  return e;
}

}  // namespace detail

template <>
inline Signature decode<Signature>(ByteView data) {
  Writer wrap;
  wrap.bytes(data);
  Reader outer(wrap.data());
  return detail::read_signature(outer);
}

template <>
inline GroupSignature decode<GroupSignature>(ByteView data) {
  Reader r(data);
  GroupSignature g;
  g.epoch = r.u64();
  auto shard = r.u64();
  if (shard > UINT32_MAX) throw DecodeError("shard index out of range");
  g.shard = static_cast<ShardId>(shard);
  auto n = r.count();
  g.member_sigs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.member_sigs.push_back(detail::read_signature(r));
  r.expect_end();
  return g;
}

template <>
inline TxInfo decode<TxInfo>(ByteView data) {
  Reader r(data);
  TxInfo t;
  t.payer = detail::read_fixed<Address>(r);
  t.payee = detail::read_fixed<Address>(r);
  t.amount = r.u64();
  t.payer_sn = r.u64();
  t.guarantee_fee = r.u64();
  t.payee_sn = r.u64();
  t.payer_sig = detail::read_signature(r);
  t.payee_sig = detail::read_signature(r);
  t.id = detail::read_fixed<Digest>(r);
  r.expect_end();
  return t;
}

template <>
inline PreGuarantee1 decode<PreGuarantee1>(ByteView data) {
  Reader r(data);
  PreGuarantee1 p;
  p.txinfo = decode<TxInfo>(r.field());
  p.guar_sn = r.u64();
  p.expectation = detail::read_expectation(r);
  p.guarantor = detail::read_fixed<Address>(r);
  p.guarantor_sig = detail::read_signature(r);
  r.expect_end();
  return p;
}

template <>
inline PreGuarantee2 decode<PreGuarantee2>(ByteView data) {
  Reader r(data);
  PreGuarantee2 p;
  p.pg1 = decode<PreGuarantee1>(r.field());
  p.payer_sig = detail::read_signature(r);
  r.expect_end();
  return p;
}

template <>
inline Guarantee decode<Guarantee>(ByteView data) {
  Reader r(data);
  Guarantee g;
  g.pg2 = decode<PreGuarantee2>(r.field());
  g.gsig = decode<GroupSignature>(r.field());
  r.expect_end();
  return g;
}

template <>
inline WithdrawalRequest decode<WithdrawalRequest>(ByteView data) {
  Reader r(data);
  WithdrawalRequest q;
  q.addr = detail::read_fixed<Address>(r);
  q.token = r.u64();
  q.serial = r.u64();
  q.sig = detail::read_signature(r);
  r.expect_end();
  return q;
}

template <>
inline WithdrawalCheck decode<WithdrawalCheck>(ByteView data) {
  Reader r(data);
  WithdrawalCheck c;
  c.request = decode<WithdrawalRequest>(r.field());
  c.gsig = decode<GroupSignature>(r.field());
  r.expect_end();
  return c;
}

template <>
inline WithdrawalCertification decode<WithdrawalCertification>(ByteView data) {
  Reader r(data);
  WithdrawalCertification c;
  c.time = r.u64();
  c.addr = detail::read_fixed<Address>(r);
  c.token = r.u64();
  c.request_id = detail::read_fixed<Digest>(r);
  c.tee_sig = detail::read_signature(r);
  r.expect_end();
  return c;
}

// ---------------------------------------------------------------------------
// Signing payloads

inline Bytes txinfo_payer_payload(const Address& payer, const Address& payee, Amount amount,
                                  Counter payer_sn, Amount fee) {
  Writer w;
  w.str("pretrust.txinfo.payer").bytes(payer.bytes).bytes(payee.bytes).u64(amount);
  w.u64(payer_sn).u64(fee);
  return std::move(w).take();
}

inline Bytes txinfo_payee_payload(const Address& payer, const Address& payee, Amount amount,
                                  Counter payee_sn) {
  Writer w;
  w.str("pretrust.txinfo.payee").bytes(payer.bytes).bytes(payee.bytes).u64(amount);
  w.u64(payee_sn);
  return std::move(w).take();
}

// id = Hash(payer signature || payee signature), raw signature bytes.
inline Digest txinfo_id(const Signature& payer_sig, const Signature& payee_sig) {
  Bytes cat(payer_sig.bytes.bytes.begin(), payer_sig.bytes.bytes.end());
  cat.insert(cat.end(), payee_sig.bytes.bytes.begin(), payee_sig.bytes.bytes.end());
  return hash_digest(cat);
}

inline Bytes pg1_payload(const TxInfo& txinfo, Counter guar_sn, const BlockExpectation& e,
                         const Address& guarantor) {
  Writer w;
  w.str("pretrust.preguarantee1").bytes(encode(txinfo)).u64(guar_sn);
  encode_expectation(w, e);
  w.bytes(guarantor.bytes);
  return std::move(w).take();
}

inline Bytes pg2_payload(const PreGuarantee1& pg1) {
  Writer w;
  w.str("pretrust.preguarantee2").bytes(encode(pg1));
  return std::move(w).take();
}

inline Bytes guarantee_message(const PreGuarantee2& pg2) {
  Writer w;
  w.str("pretrust.guarantee").bytes(encode(pg2));
  return std::move(w).take();
}

inline Bytes withdrawal_request_payload(const Address& addr, Amount token, Counter serial) {
  Writer w;
  w.str("pretrust.withdrawal.request").bytes(addr.bytes).u64(token).u64(serial);
  return std::move(w).take();
}

inline Bytes withdrawal_check_message(const WithdrawalRequest& req) {
  Writer w;
  w.str("pretrust.withdrawal.check").bytes(encode(req));
  return std::move(w).take();
}

inline Bytes certification_payload(SimTime time, const Address& addr, Amount token,
                                   const Digest& request_id) {
  Writer w;
  w.str("pretrust.withdrawal.certification").u64(time).bytes(addr.bytes).u64(token);
  w.bytes(request_id.bytes);
  return std::move(w).take();
}

inline Digest request_digest(const WithdrawalRequest& r) { return hash_digest(encode(r)); }
inline Digest certification_digest(const WithdrawalCertification& c) {
  return hash_digest(encode(c));
}

// ---------------------------------------------------------------------------
// Construction

inline Outcome<TxInfo> assemble_txinfo(const KeyPair& payer, const KeyPair& payee, Amount amount,
                                       Amount fee, Counter payer_sn, Counter payee_sn) {
  if (amount == 0) return fail("amount must be positive");
  TxInfo t;
  t.payer = derive_address(payer.pk);
  t.payee = derive_address(payee.pk);
  if (t.payer == t.payee) return fail("payer and payee must differ");
  t.amount = amount;
  t.guarantee_fee = fee;
  t.payer_sn = payer_sn;
  t.payee_sn = payee_sn;
  t.payer_sig = sign(payer, txinfo_payer_payload(t.payer, t.payee, amount, payer_sn, fee));
  t.payee_sig = sign(payee, txinfo_payee_payload(t.payer, t.payee, amount, payee_sn));
  t.id = txinfo_id(t.payer_sig, t.payee_sig);
  return t;
}

inline PreGuarantee1 issue_pre_guarantee1(const KeyPair& guarantor, const TxInfo& txinfo,
                                          Counter guar_sn, const BlockExpectation& e) {
  PreGuarantee1 p{txinfo, guar_sn, e, derive_address(guarantor.pk), {}};
  p.guarantor_sig = sign(guarantor, pg1_payload(txinfo, guar_sn, e, p.guarantor));
  return p;
}

inline PreGuarantee2 countersign_pre_guarantee1(const KeyPair& payer, const PreGuarantee1& pg1) {
  return PreGuarantee2{pg1, sign(payer, pg2_payload(pg1))};
}

inline Guarantee seal_guarantee(std::span<const KeyPair> roster, EpochIndex epoch,
                                ShardId shard, const PreGuarantee2& pg2) {
  return Guarantee{pg2, group_sign(roster, epoch, shard, guarantee_message(pg2))};
}

inline WithdrawalRequest make_withdrawal_request(const KeyPair& keys, Amount token,
                                                 Counter serial) {
  WithdrawalRequest r{derive_address(keys.pk), token, serial, {}};
  r.sig = sign(keys, withdrawal_request_payload(r.addr, token, serial));
  return r;
}

inline WithdrawalCheck make_withdrawal_check(std::span<const KeyPair> roster, EpochIndex epoch,
                                             ShardId shard, const WithdrawalRequest& req) {
  return WithdrawalCheck{req, group_sign(roster, epoch, shard, withdrawal_check_message(req))};
}

inline WithdrawalCertification issue_certification(const KeyPair& tee, SimTime time,
                                                   const Address& addr, Amount token,
                                                   const Digest& request_id) {
  WithdrawalCertification c{time, addr, token, request_id, {}};
  c.tee_sig = sign(tee, certification_payload(time, addr, token, request_id));
  return c;
}

// ---------------------------------------------------------------------------
// Structural validation: every embedded signature verifies and every
// recomputable field recomputes. Never throws.

inline bool verify_structure(const TxInfo& t) {
  if (t.amount == 0 || t.payer == t.payee) return false;
  if (t.payer_sig.signer() != t.payer || t.payee_sig.signer() != t.payee) return false;
  if (!verify(txinfo_payer_payload(t.payer, t.payee, t.amount, t.payer_sn, t.guarantee_fee),
              t.payer_sig))
    return false;
  if (!verify(txinfo_payee_payload(t.payer, t.payee, t.amount, t.payee_sn), t.payee_sig))
    return false;
  return t.id == txinfo_id(t.payer_sig, t.payee_sig);
}

inline bool verify_structure(const PreGuarantee1& p) {
  if (!verify_structure(p.txinfo)) return false;
  if (p.expectation.height_min > p.expectation.height_max) return false;
  if (p.guarantor_sig.signer() != p.guarantor) return false;
  return verify(pg1_payload(p.txinfo, p.guar_sn, p.expectation, p.guarantor), p.guarantor_sig);
}

inline bool verify_structure(const PreGuarantee2& p) {
  if (!verify_structure(p.pg1)) return false;
  if (p.payer_sig.signer() != p.pg1.txinfo.payer) return false;
  return verify(pg2_payload(p.pg1), p.payer_sig);
}

inline bool verify_structure(const Guarantee& g, const RosterLookup& rosters) {
  if (!verify_structure(g.pg2)) return false;
  const auto* roster = rosters ? rosters(g.gsig.epoch, g.gsig.shard) : nullptr;
  if (roster == nullptr || roster->empty()) return false;
  if (std::find(roster->begin(), roster->end(), g.guarantor()) == roster->end()) return false;
  return group_verify_strict(*roster, guarantee_message(g.pg2), g.gsig);
}

inline bool verify_structure(const WithdrawalRequest& r) {
  if (r.token == 0 || r.sig.signer() != r.addr) return false;
  return verify(withdrawal_request_payload(r.addr, r.token, r.serial), r.sig);
}

inline bool verify_structure(const WithdrawalCheck& c, const RosterLookup& rosters) {
  if (!verify_structure(c.request)) return false;
  const auto* roster = rosters ? rosters(c.gsig.epoch, c.gsig.shard) : nullptr;
  if (roster == nullptr || roster->empty()) return false;
  return group_verify_strict(*roster, withdrawal_check_message(c.request), c.gsig);
}

inline bool verify_structure(const WithdrawalCertification& c, const PublicKey& tee_pk) {
  return verify(tee_pk, certification_payload(c.time, c.addr, c.token, c.request_id), c.tee_sig);
}

}  // namespace pretrust
