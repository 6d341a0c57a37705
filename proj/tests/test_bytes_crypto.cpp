#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

using namespace pretrust;

TEST(Bytes, HexRoundTrip) {
  Bytes b{0x00, 0x7f, 0xff};
  EXPECT_EQ(to_hex(b), "007fff");
  EXPECT_EQ(from_hex("007fff"), b);
  EXPECT_THROW(from_hex("0"), DecodeError);
  EXPECT_THROW(from_hex("zz"), DecodeError);
}

TEST(Bytes, WriterReaderFields) {
  Writer w;
  w.u64(0x0102030405060708ULL).str("ab").count(1).str("x");
  const auto& d = w.data();
  ASSERT_EQ(d.size(), 8 + 8 + 8 + 2 + 8 + 8 + 8 + 1);
  EXPECT_EQ(to_hex(ByteView(d).subspan(0, 16)), "00000000000000080102030405060708");
  Reader r(d);
  EXPECT_EQ(r.u64(), 0x0102030405060708ULL);
  EXPECT_EQ(r.str(), "ab");
  EXPECT_EQ(r.count(), 1u);
  EXPECT_EQ(r.str(), "x");
  r.expect_end();
}

TEST(Bytes, CountBeyondInputRejected) {
  Writer w;
  w.count(2);
  Reader r(w.data());
  EXPECT_THROW(r.count(), DecodeError);
}

TEST(Bytes, ReaderRejectsTruncation) {
  Writer w;
  w.str("hello");
  auto d = w.data();
  d.pop_back();
  Reader r(d);
  EXPECT_THROW(r.field(), DecodeError);
}

TEST(Hash, EmptyInputPublishedDigest) {
  EXPECT_EQ(hash_digest(std::string_view{}).hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, Deterministic) { EXPECT_EQ(hash_digest("pretrust"), hash_digest("pretrust")); }

// Oracle: Python hashlib.
TEST(Hash, OneBitApartDiffers) {
  const std::string a = "abc";
  std::string b = a;
  b[0] ^= 1;
  EXPECT_EQ(hash_digest(a).hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(hash_digest(b).hex(), "89f900390e14d37c405c75244fb086aa35b54c0fb6ec3638c1c21451d4743d11");
}

TEST(Hash, IncrementalMatchesOneShot) {
  Hasher h;
  h.update("pre").update("trust");
  EXPECT_EQ(h.finish(), hash_digest("pretrust"));
}

TEST(Keys, SameSeedSameKeys) {
  auto s = seed_from("k");
  EXPECT_EQ(keygen(s), keygen(s));
}

TEST(Keys, DistinctSeedsDistinctKeys) {
  EXPECT_NE(keygen(seed_from("s1")).pk, keygen(seed_from("s2")).pk);
}

TEST(Keys, SignVerifyRoundTrip) {
  auto kp = keygen(seed_from("any"));
  auto sig = sign(kp, as_bytes("msg"));
  EXPECT_TRUE(verify(kp.pk, as_bytes("msg"), sig));
}

TEST(Address, IsTruncatedHashOfKey) {
  for (int i = 0; i < 64; ++i) {
    auto pk = keygen(seed_from("addr/" + std::to_string(i))).pk;
    auto h = hash_digest(pk.view());
    auto a = derive_address(pk);
    EXPECT_TRUE(std::equal(a.bytes.begin(), a.bytes.end(), h.bytes.begin()));
  }
}

TEST(Address, Deterministic) {
  auto pk = fixture::key("alice").pk;
  EXPECT_EQ(derive_address(pk), derive_address(pk));
}

// Oracle: Python cryptography (Ed25519 from seed) + hashlib.
TEST(Address, ReferenceFixture) {
  auto pk = fixture::key("alice").pk;
  EXPECT_EQ(pk.hex(), "78dd59bfbe1f2fc1ff9165f2c2ca77b9c066338d92b72253cc85984f563bfa63");
  EXPECT_EQ(derive_address(pk).hex(), "00e023d9838e40d9297883342dfc3481518bbd0d");
}

TEST(Signature, FlippedMessageBitFails) {
  auto kp = fixture::key("alice");
  Bytes msg{1, 2, 3};
  auto sig = sign(kp, msg);
  msg[1] ^= 0x01;
  EXPECT_FALSE(verify(kp.pk, msg, sig));
}

TEST(Signature, OtherPartysKeyFails) {
  auto a = fixture::key("alice");
  auto b = fixture::key("bob");
  auto sig = sign(a, as_bytes("m"));
  EXPECT_FALSE(verify(b.pk, as_bytes("m"), sig));
}

TEST(Signature, EmbeddedKeyMismatchFails) {
  auto a = fixture::key("alice");
  auto b = fixture::key("bob");
  auto sig = sign(a, as_bytes("m"));
  sig.signer_pk = b.pk;
  EXPECT_FALSE(verify(as_bytes("m"), sig));
}

namespace {

struct Group {
  std::vector<KeyPair> keys;
  std::vector<Address> roster;
  explicit Group(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      keys.push_back(fixture::key("group/" + std::to_string(i)));
      roster.push_back(derive_address(keys.back().pk));
    }
  }
};

}  // namespace

TEST(GroupSignature, Threshold) {
  EXPECT_EQ(group_threshold(1), 1u);
  EXPECT_EQ(group_threshold(3), 2u);
  EXPECT_EQ(group_threshold(4), 3u);
  EXPECT_EQ(group_threshold(6), 4u);
  EXPECT_EQ(group_threshold(7), 5u);
}

TEST(GroupSignature, RosterThreeTwoValidPasses) {
  Group g(3);
  auto msg = as_bytes("block");
  auto gs = group_sign(std::span(g.keys).first(2), 0, 0, msg);
  EXPECT_TRUE(group_verify(g.roster, 2, msg, gs));
}

TEST(GroupSignature, RosterThreeOneValidFails) {
  Group g(3);
  auto msg = as_bytes("block");
  auto gs = group_sign(std::span(g.keys).first(1), 0, 0, msg);
  EXPECT_FALSE(group_verify(g.roster, 2, msg, gs));
}

// Oracle: count distinct signers by enumeration; {k0, k1, k1} has 2 < 3.
TEST(GroupSignature, DuplicateSignerDoesNotCount) {
  Group g(4);
  auto msg = as_bytes("block");
  auto gs = group_sign(std::span(g.keys).first(2), 0, 0, msg);
  gs.member_sigs.push_back(gs.member_sigs[1]);
  std::set<Address> distinct;
  for (const auto& s : gs.member_sigs) distinct.insert(s.signer());
  ASSERT_EQ(distinct.size(), 2u);
  EXPECT_FALSE(group_verify(g.roster, 3, msg, gs));
  EXPECT_FALSE(group_verify_strict(g.roster, msg, gs));
}

TEST(GroupSignature, OutsiderIgnored) {
  Group g(3);
  auto msg = as_bytes("block");
  auto gs = group_sign(std::span(g.keys).first(1), 0, 0, msg);
  auto outsider = fixture::key("outsider");
  gs.member_sigs.push_back(sign(outsider, group_payload(0, 0, msg)));
  EXPECT_FALSE(group_verify(g.roster, 2, msg, gs));
}

TEST(GroupSignature, BoundToEpochAndShard) {
  Group g(3);
  auto msg = as_bytes("block");
  auto gs = group_sign(g.keys, 5, 1, msg);
  EXPECT_TRUE(group_verify(g.roster, 2, msg, gs));
  gs.epoch = 6;
  EXPECT_FALSE(group_verify(g.roster, 2, msg, gs));
}
