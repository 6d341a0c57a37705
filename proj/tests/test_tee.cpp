#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace pretrust;
using fixture::World;

namespace {

struct Env {
  World w{fixture::one_shard(), 4, 1000, {{"alice", 10}, {"bob", 10}}};
  TeeState tee{fixture::key("tee")};
  PublicChain chain{{}, fixture::key("tee").pk};
  Address alice = fixture::addr("alice");

  WithdrawalCheck request(Amount token) {
    auto req = make_withdrawal_request(w.kp("alice"), token, w.ledger.account(alice).next_withdrawal_sn);
    return handle_withdrawal_request(w.ledger, 0, w.roster_keys(0), req).value();
  }
};

}  // namespace

TEST(Tee, CheckLocksAccount) {
  Env e;
  auto check = e.request(7);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  EXPECT_TRUE(e.w.ledger.account(e.alice).withdrawal_locked);
  // Locked accounts are refused as payers.
  auto tx = assemble_txinfo(e.w.kp("alice"), e.w.kp("bob"), 1, 0, 0, 0).value();
  EXPECT_FALSE(verify_txinfo(e.w.ledger, e.w.book, e.w.kp(e.w.elected(tx)), tx, 100).ok());
}

TEST(Tee, SecondCheckWhilePendingRejected) {
  Env e;
  auto check = e.request(7);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  EXPECT_FALSE(tee_submit_check(e.tee, e.w.ledger, check).ok());
}

TEST(Tee, InvalidGroupSignatureNotLocked) {
  Env e;
  auto check = e.request(7);
  check.gsig.member_sigs.resize(1);
  EXPECT_FALSE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  EXPECT_FALSE(e.w.ledger.account(e.alice).withdrawal_locked);
  EXPECT_TRUE(e.tee.pending.empty());
}

TEST(Tee, MatchingDeductionCertified) {
  Env e;
  auto check = e.request(7);
  EXPECT_EQ(e.w.ledger.account(e.alice).balance, 3u);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  auto cert = tee_certify(e.tee, e.w.ledger, e.alice, 500);
  ASSERT_TRUE(cert.ok());
  EXPECT_EQ(cert->token, 7u);
  EXPECT_EQ(cert->addr, e.alice);
  EXPECT_EQ(cert->time, 500u);
  EXPECT_TRUE(verify_structure(*cert, e.tee.keys.pk));
  EXPECT_FALSE(e.w.ledger.account(e.alice).withdrawal_locked);
  EXPECT_EQ(e.w.ledger.deductions.at(request_digest(check.request)).status, DeductionStatus::certified);
}

TEST(Tee, AbsentDeductionRejected) {
  Env e;
  auto req = make_withdrawal_request(e.w.kp("alice"), 7, 0);
  auto check = make_withdrawal_check(e.w.roster_keys(0), 0, 0, req);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  auto r = tee_certify(e.tee, e.w.ledger, e.alice, 500);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.failure().reason, "no deduction recorded for check");
  EXPECT_FALSE(e.w.ledger.account(e.alice).withdrawal_locked);
  EXPECT_EQ(e.w.ledger.account(e.alice).balance, 10u);
}

// Only the exact recorded amount certifies; any other deduction is restored.
TEST(Tee, MismatchFuzzRestores) {
  for (Amount recorded = 1; recorded <= 10; ++recorded) {
    Env e;
    auto check = e.request(7);
    e.w.ledger.account(e.alice).balance += 7;
    e.w.ledger.account(e.alice).balance -= recorded;
    e.w.ledger.deductions.at(request_digest(check.request)).token = recorded;
    ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
    std::vector<RestoreRecord> comp;
    auto r = tee_certify(e.tee, e.w.ledger, e.alice, 500, &comp);
    EXPECT_EQ(r.ok(), recorded == 7) << recorded;
    if (recorded != 7) {
      ASSERT_EQ(comp.size(), 1u);
      EXPECT_EQ(comp[0].token, recorded);
      EXPECT_EQ(e.w.ledger.account(e.alice).balance, 10u);
    } else {
      EXPECT_EQ(e.w.ledger.account(e.alice).balance, 3u);
    }
  }
}

TEST(Tee, LapsedCertificateRestored) {
  Env e;
  auto check = e.request(7);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  auto cert = tee_certify(e.tee, e.w.ledger, e.alice, 500).value();
  const auto id = request_digest(check.request);
  const SimTime interval = e.w.params.time_interval;
  EXPECT_FALSE(tee_expire(e.tee, e.w.ledger, e.chain, id, 500 + interval).has_value());
  auto r = tee_expire(e.tee, e.w.ledger, e.chain, id, 500 + interval + 1);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->token, 7u);
  EXPECT_EQ(e.w.ledger.account(e.alice).balance, 10u);
  EXPECT_FALSE(tee_expire(e.tee, e.w.ledger, e.chain, id, 500 + interval + 2).has_value());
  // The public chain refuses the lapsed certificate.
  EXPECT_FALSE(e.chain.withdraw(cert, 500 + interval + 1, interval).ok());
}

TEST(Tee, RedeemedCertificateNotRestored) {
  Env e;
  auto reg_kp = e.w.kp("bob");
  PublicChain chain{{{derive_address(reg_kp.pk), 50}}, e.tee.keys.pk};
  ASSERT_TRUE(chain
                  .register_account(derive_address(reg_kp.pk), 50, AccountKind::client,
                                    sign(reg_kp, registration_payload(derive_address(reg_kp.pk), 50,
                                                                      AccountKind::client)))
                  .ok());
  auto check = e.request(7);
  ASSERT_TRUE(tee_submit_check(e.tee, e.w.ledger, check).ok());
  auto cert = tee_certify(e.tee, e.w.ledger, e.alice, 500).value();
  ASSERT_TRUE(chain.withdraw(cert, 600, e.w.params.time_interval).ok());
  EXPECT_FALSE(tee_expire(e.tee, e.w.ledger, chain, request_digest(check.request),
                          500 + e.w.params.time_interval + 1)
                   .has_value());
  EXPECT_EQ(e.w.ledger.account(e.alice).balance, 3u);
}
