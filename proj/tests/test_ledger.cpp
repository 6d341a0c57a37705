#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace pretrust;
using fixture::World;

namespace {

World small_world(Amount client_balance = 1000, Amount deposit = 1000) {
  return World(fixture::one_shard(), 4, deposit, {{"alice", client_balance}, {"bob", client_balance}});
}

// Guarantee sealed by exactly `signers` roster members (not necessarily
// including the guarantor), for fee-split checks.
Guarantee guarantee_with_signers(const World& w, Amount amount, Amount fee, std::size_t signers) {
  auto tx = assemble_txinfo(w.kp("alice"), w.kp("bob"), amount, fee, 0, 0).value();
  auto roster = w.roster_keys(0);
  auto pg1 = issue_pre_guarantee1(roster[0], tx, 0, {0, 1, 3});
  auto pg2 = countersign_pre_guarantee1(w.kp("alice"), pg1);
  std::vector<KeyPair> chosen(roster.end() - static_cast<std::ptrdiff_t>(signers), roster.end());
  return seal_guarantee(chosen, 0, 0, pg2);
}

std::map<Address, std::int64_t> net_by_account(const std::vector<Effect>& effects) {
  std::map<Address, std::int64_t> out;
  for (const auto& e : effects) out[e.account] += e.delta;
  return out;
}

}  // namespace

TEST(Membership, ClientEntryBecomesBalance) {
  auto a = account_from({fixture::addr("alice"), AccountKind::client, 10, true});
  EXPECT_EQ(a.balance, 10u);
  EXPECT_EQ(a.deposit, 0u);
}

TEST(Membership, GuarantorEntryBecomesDeposit) {
  auto a = account_from({fixture::addr("g"), AccountKind::guarantor, 100, true});
  EXPECT_EQ(a.deposit, 100u);
  EXPECT_EQ(a.locked, 0u);
  EXPECT_EQ(a.balance, 0u);
}

TEST(Membership, EmptyListEmptyLedger) {
  auto s = bootstrap_from_membership({}, SecurityParams{});
  EXPECT_TRUE(s.accounts.empty());
}

TEST(Membership, DuplicateAddressRejected) {
  MembershipEntry e{fixture::addr("alice"), AccountKind::client, 10, true};
  std::vector<MembershipEntry> list{e, e};
  EXPECT_THROW(bootstrap_from_membership(list, SecurityParams{}), Error);
}

TEST(Lock, AmountIsCeilOfRatioTimesCPlusFee) {
  SecurityParams p;
  EXPECT_EQ(lock_amount(p, 10, 1), 22u);
  p.collateral_ratio = Ratio{5, 2};
  EXPECT_EQ(lock_amount(p, 10, 1), 28u);  // 27.5 rounds up
}

TEST(Lock, CapacityBoundary) {
  auto w = small_world(1000, 22);
  const auto g = w.guarantor_addrs[0];
  EXPECT_TRUE(lock_capacity(w.ledger, g, 22).ok());
  EXPECT_EQ(w.ledger.account(g).locked, 22u);

  auto w2 = small_world(1000, 22);
  const auto g2 = w2.guarantor_addrs[0];
  ASSERT_TRUE(lock_capacity(w2.ledger, g2, 1).ok());
  EXPECT_FALSE(lock_capacity(w2.ledger, g2, 22).ok());
  EXPECT_EQ(w2.ledger.account(g2).locked, 1u);
}

TEST(Lock, ReleasedWhenGuaranteeIsRecorded) {
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 1);
  ASSERT_EQ(w.ledger.account(g.guarantor()).locked, 22u);
  auto b = w.append_block(0, {GuaranteeRecord{g}});
  EXPECT_EQ(unlock_on_block(w.ledger, w.ledger.epoch().roster(0), b), 22u);
  EXPECT_EQ(w.ledger.account(g.guarantor()).locked, 0u);
  EXPECT_TRUE(w.ledger.locks.empty());
}

TEST(Lock, BlockOfAnotherShardDoesNotUnlock) {
  SecurityParams p;  // four shards
  World w(p, 16, 1000, {{"alice", 1000}, {"bob", 1000}});
  auto g = w.guarantee("alice", "bob", 10, 1);
  const ShardId payer_shard = w.shard_of_client("alice");
  const ShardId other = (payer_shard + 1) % 4;
  // A block of another shard carrying nothing relevant releases nothing, and
  // the same guarantee cannot be smuggled into it.
  auto b = w.append_block(other, {});
  EXPECT_EQ(unlock_on_block(w.ledger, w.ledger.epoch().roster(payer_shard), b), 0u);
  Block forged = b;
  forged.records.push_back(GuaranteeRecord{g});
  EXPECT_FALSE(validate_block(forged, w.ledger));
  EXPECT_EQ(w.ledger.account(g.guarantor()).locked, 22u);
}

// Oracle: per-guarantee replay of the lock registry.
TEST(Lock, TwoGuaranteesSameGuarantorSummed) {
  auto w = small_world();
  auto g1 = w.guarantee("alice", "bob", 10, 1);
  auto tx2 = assemble_txinfo(w.kp("alice"), w.kp("bob"), 20, 2, 1, 1).value();
  // Force the same guarantor for the second guarantee.
  auto pg1 = verify_txinfo(w.ledger, w.book, w.keys.at(g1.guarantor()), tx2, 100 + 0);
  ASSERT_TRUE(pg1.ok());
  auto rank = priority_rank(elect_guarantor(w.ledger.epoch().roster(0), tx2.id), g1.guarantor());
  auto g2 = group_generate_guarantee(w.ledger, w.book, 0, w.roster_keys(0),
                                     countersign_pre_guarantee1(w.kp("alice"), *pg1),
                                     100 + rank * w.params.response_timeout);
  ASSERT_TRUE(g2.ok()) << g2.failure().reason;
  const Amount expected = w.ledger.locks.at(g1.id()).amount + w.ledger.locks.at(g2->id()).amount;
  EXPECT_EQ(expected, 22u + 44u);
  auto b = w.append_block(0, {GuaranteeRecord{g1}, GuaranteeRecord{*g2}});
  EXPECT_EQ(unlock_on_block(w.ledger, w.ledger.epoch().roster(0), b), expected);
  EXPECT_EQ(w.ledger.account(g1.guarantor()).locked, 0u);
}

TEST(Settlement, FeeFourTwoSigners) {
  auto w = small_world();
  auto g = guarantee_with_signers(w, 10, 4, 2);
  auto net = net_by_account(settlement_effects(g, w.params));
  EXPECT_EQ(net[g.txinfo().payer], -14);
  EXPECT_EQ(net[g.txinfo().payee], 10);
  auto signers = g.gsig.signers();
  ASSERT_EQ(signers.size(), 2u);
  ASSERT_EQ(std::count(signers.begin(), signers.end(), g.guarantor()), 0);
  EXPECT_EQ(net[g.guarantor()], 2);
  for (const auto& s : signers) EXPECT_EQ(net[s], 1);
}

TEST(Settlement, ZeroFeeMovesOnlyC) {
  auto w = small_world();
  auto g = guarantee_with_signers(w, 10, 0, 3);
  auto effects = settlement_effects(g, w.params);
  ASSERT_EQ(effects.size(), 2u);
  auto net = net_by_account(effects);
  EXPECT_EQ(net[g.txinfo().payer], -10);
  EXPECT_EQ(net[g.txinfo().payee], 10);
}

// fee 5, share 1/2, 3 signers: guarantor floor(2.5) = 2, the remaining 3
// split 1 each, remainder 0.
TEST(Settlement, FeeFiveThreeSigners) {
  auto w = small_world();
  auto g = guarantee_with_signers(w, 10, 5, 3);
  auto net = net_by_account(settlement_effects(g, w.params));
  auto signers = g.gsig.signers();
  for (const auto& s : signers)
    EXPECT_EQ(net[s], s == g.guarantor() ? 3 : 1);
  std::int64_t fee_paid = 0;
  for (const auto& [a, d] : net)
    if (a != g.txinfo().payer && a != g.txinfo().payee) fee_paid += d;
  EXPECT_EQ(fee_paid, 5);
}

// Oracle: closed-form split enumerated over small fees, shares and signer
// counts; the payouts always sum to the fee.
TEST(Settlement, FeeSplitEnumeration) {
  auto w = small_world();
  const std::vector<Ratio> shares{Ratio{0}, Ratio{1, 3}, Ratio{1, 2}, Ratio{2, 3}, Ratio{1}};
  for (Amount fee = 0; fee <= 30; ++fee) {
    for (std::size_t k = 1; k <= 4; ++k) {
      auto g = guarantee_with_signers(w, 10, fee, k);
      for (const auto& share : shares) {
        auto p = w.params;
        p.fee_share_guarantor = share;
        auto net = net_by_account(settlement_effects(g, p));
        const auto signers = g.gsig.signers();
        const Amount cut = fee * share.num / share.den;
        const Amount each = fee == 0 ? 0 : (fee - cut) / k;
        const Amount rem = fee == 0 ? 0 : (fee - cut) % k;
        std::int64_t total = 0;
        for (const auto& s : signers) {
          const std::int64_t expect = static_cast<std::int64_t>(each + (s == g.guarantor() ? cut + rem : 0));
          EXPECT_EQ(net[s], expect) << "fee " << fee << " k " << k;
        }
        for (const auto& [a, d] : net)
          if (a != g.txinfo().payer && a != g.txinfo().payee) total += d;
        if (std::find(signers.begin(), signers.end(), g.guarantor()) == signers.end()) {
          EXPECT_EQ(net[g.guarantor()], static_cast<std::int64_t>(cut + rem));
        }
        EXPECT_EQ(total, static_cast<std::int64_t>(fee));
      }
    }
  }
}

TEST(Settlement, RequiresRecordedGuarantee) {
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 1);
  EXPECT_FALSE(apply_settlement(w.ledger, g).ok());
  w.append_block(0, {GuaranteeRecord{g}});
  EXPECT_TRUE(apply_settlement(w.ledger, g).ok());
  EXPECT_FALSE(apply_settlement(w.ledger, g).ok());
  EXPECT_EQ(w.ledger.account(fixture::addr("bob")).balance, 1010u);
  EXPECT_EQ(w.ledger.account(fixture::addr("alice")).balance, 989u);
  EXPECT_EQ(w.ledger.account(fixture::addr("alice")).reserved, 0u);
}

TEST(Effects, BatchIsAtomic) {
  auto w = small_world(10);
  const auto a = fixture::addr("alice");
  const auto b = fixture::addr("bob");
  std::vector<Effect> bad{{b, Bucket::balance, 5}, {a, Bucket::balance, -11}};
  EXPECT_THROW(apply_effects(w.ledger, bad), Error);
  EXPECT_EQ(w.ledger.account(a).balance, 10u);
  EXPECT_EQ(w.ledger.account(b).balance, 10u);
}

TEST(Blocks, EmptyBlockValid) {
  auto w = small_world();
  auto b = w.append_block(0, {});
  EXPECT_TRUE(b.records.empty());
  EXPECT_TRUE(validate_block(b, w.ledger));
}

TEST(Blocks, TamperedRecordInvalid) {
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 1);
  auto b = w.append_block(0, {GuaranteeRecord{g}});
  auto t = b;
  std::get<GuaranteeRecord>(t.records[0]).guarantee.pg2.pg1.txinfo.amount = 11;
  EXPECT_FALSE(validate_block(t, w.ledger));
  t.hash = compute_block_hash(t);
  EXPECT_FALSE(validate_block(t, w.ledger));
}

TEST(Blocks, EncodeDecodeRoundTrip) {
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 1);
  auto b = w.append_block(0, {GuaranteeRecord{g}});
  EXPECT_EQ(decode<Block>(encode(b)).hash, b.hash);
  EXPECT_EQ(encode(decode<Block>(encode(b))), encode(b));
}

TEST(Blocks, ExpectationWindowRule) {
  // Expectation [h+1, h+3] issued at tip h: included at h+1 and h+3, dropped after.
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 1);
  const auto e = g.expectation();
  EXPECT_EQ(e.height_min, w.ledger.chains[0].tip_height() + 1);
  EXPECT_EQ(e.height_max, e.height_min + 2);

  auto w_late = w;
  std::vector<Record> pool{GuaranteeRecord{g}};
  for (int i = 0; i < 2; ++i) {
    std::vector<Record> none;
    auto b = produce_block(w_late.ledger, 0, 1, none, w_late.roster_keys(0));
    ASSERT_TRUE(append_record_block(w_late.ledger, b).ok());
  }
  auto at_max = produce_block(w_late.ledger, 0, 1, pool, w_late.roster_keys(0));
  EXPECT_EQ(at_max.height, e.height_max);
  EXPECT_EQ(at_max.records.size(), 1u);

  auto w_expired = w_late;
  ASSERT_TRUE(w_expired.append(0, {}).ok());  // height_max passes empty
  std::vector<Record> pool2{GuaranteeRecord{g}};
  auto after = produce_block(w_expired.ledger, 0, 1, pool2, w_expired.roster_keys(0));
  EXPECT_EQ(after.height, e.height_max + 1);
  EXPECT_TRUE(after.records.empty());
  EXPECT_TRUE(pool2.empty());
  after.records.push_back(GuaranteeRecord{g});
  after.hash = compute_block_hash(after);
  EXPECT_FALSE(validate_block(after, w_expired.ledger));
}

TEST(Blocks, AppendChecksLinkAndHeight) {
  auto w = small_world();
  std::vector<Record> none;
  auto b = produce_block(w.ledger, 0, 1, none, w.roster_keys(0));
  auto skipped = b;
  skipped.height += 1;
  EXPECT_FALSE(append_record_block(w.ledger, skipped).ok());
  auto unlinked = b;
  unlinked.prev_hash.bytes[0] ^= 1;
  EXPECT_FALSE(append_record_block(w.ledger, unlinked).ok());
  EXPECT_TRUE(append_record_block(w.ledger, b).ok());
}

namespace {

ArbitrationRecord omitted_claim(World& w, Amount amount) {
  auto g = w.guarantee("alice", "bob", amount, 0);
  while (w.ledger.chains[0].tip_height() < g.expectation().height_max) w.append_block(0, {});
  auto r = file_arbitration(w.ledger, g.txinfo().payee, g);
  if (!r) throw Error(r.failure().reason);
  return *r;
}

}  // namespace

TEST(Arbitration, SingleGuarantorAlwaysProduces) {
  auto w = small_world();
  std::mt19937_64 rng(1);
  std::vector<Address> one{w.guarantor_addrs[2]};
  for (int i = 0; i < 5; ++i) {
    auto b = append_arbitration_block(w.ledger, {}, one, 0, rng);
    EXPECT_EQ(b.producer, one[0]);
  }
}

TEST(Arbitration, FixedSeedSameProducers) {
  auto w1 = small_world();
  auto w2 = small_world();
  std::mt19937_64 r1(9), r2(9);
  for (int i = 0; i < 20; ++i)
    EXPECT_EQ(append_arbitration_block(w1.ledger, {}, w1.guarantor_addrs, 0, r1).producer,
              append_arbitration_block(w2.ledger, {}, w2.guarantor_addrs, 0, r2).producer);
}

// Oracle: binomial(10^4, 1/4) has sd ~43.3; 150 is the 3.5 sigma band.
TEST(Arbitration, LotteryIsUniform) {
  std::vector<Address> g;
  for (std::uint8_t i = 0; i < 4; ++i) g.push_back(fixture::address_from_byte(i));
  std::mt19937_64 rng(42);
  std::map<Address, int> wins;
  for (int i = 0; i < 10000; ++i) ++wins[g[uniform_below(rng, g.size())]];
  for (const auto& a : g) {
    EXPECT_GE(wins[a], 2350);
    EXPECT_LE(wins[a], 2650);
  }
}

TEST(Arbitration, CompensationAndPunishmentFromWeights) {
  auto w = small_world(1000, 1000);
  auto rec = omitted_claim(w, 100);
  EXPECT_EQ(rec.compensation_owed, 150u);
  EXPECT_EQ(rec.punishment_owed, 50u);
  const auto offender = rec.guarantee.guarantor();
  const auto payee = rec.claimant;
  std::vector<Address> others;
  for (const auto& a : w.guarantor_addrs)
    if (a != offender) others.push_back(a);
  const Amount payee_before = w.ledger.account(payee).balance;
  std::mt19937_64 rng(3);
  auto b = append_arbitration_block(w.ledger, {rec}, others, 5, rng);
  EXPECT_EQ(w.ledger.account(payee).balance, payee_before + 150);
  EXPECT_EQ(w.ledger.account(b.producer).balance, 50u);
  EXPECT_EQ(w.ledger.account(offender).deposit, 800u);
  EXPECT_EQ(w.ledger.account(offender).locked, 0u);
  EXPECT_TRUE(validate_arbitration_block(b, nullptr, w.ledger));
}

// Oracle: totals conserve; deposit 120 covers 120 of the 200 owed and the
// balance covers the remaining 80.
TEST(Arbitration, DepositThenBalance) {
  auto w = small_world(1000, 1000);
  auto rec = omitted_claim(w, 100);
  const auto offender = rec.guarantee.guarantor();
  release_lock(w.ledger, rec.guarantee.id());
  auto& acct = w.ledger.account(offender);
  acct.deposit = 120;
  acct.balance = 100;
  std::vector<Address> others;
  for (const auto& a : w.guarantor_addrs)
    if (a != offender) others.push_back(a);
  std::mt19937_64 rng(3);
  auto b = append_arbitration_block(w.ledger, {rec}, others, 5, rng);
  EXPECT_EQ(w.ledger.account(offender).deposit, 0u);
  EXPECT_EQ(w.ledger.account(offender).balance, 20u);
  EXPECT_EQ(b.records[0].shortfall, 0u);
  EXPECT_TRUE(w.ledger.losses.empty());
}

TEST(Arbitration, ShortfallIsLogged) {
  auto w = small_world(1000, 1000);
  auto rec = omitted_claim(w, 100);
  const auto offender = rec.guarantee.guarantor();
  release_lock(w.ledger, rec.guarantee.id());
  auto& acct = w.ledger.account(offender);
  acct.deposit = 120;
  acct.balance = 50;
  std::vector<Address> others;
  for (const auto& a : w.guarantor_addrs)
    if (a != offender) others.push_back(a);
  std::mt19937_64 rng(3);
  auto b = append_arbitration_block(w.ledger, {rec}, others, 5, rng);
  EXPECT_EQ(b.records[0].shortfall, 30u);
  ASSERT_EQ(w.ledger.losses.size(), 1u);
  EXPECT_EQ(w.ledger.losses[0].shortfall, 30u);
  EXPECT_EQ(w.ledger.account(rec.claimant).balance, 1150u);
  EXPECT_EQ(w.ledger.account(b.producer).balance, 20u);
}

TEST(Arbitration, EncodeDecodeRoundTrip) {
  auto w = small_world();
  auto rec = omitted_claim(w, 40);
  std::mt19937_64 rng(1);
  auto b = append_arbitration_block(w.ledger, {rec}, w.guarantor_addrs, 5, rng);
  auto d = decode<ArbitrationBlock>(encode(b));
  EXPECT_EQ(encode(d), encode(b));
  EXPECT_EQ(compute_arbitration_hash(d), b.hash);
}

TEST(Replay, ReproducesLiveBalances) {
  auto w = small_world();
  auto g = w.guarantee("alice", "bob", 10, 2);
  w.append_block(0, {GuaranteeRecord{g}});
  ASSERT_TRUE(apply_settlement(w.ledger, g).ok());
  w.append_block(0, {SettlementRecord{g, sign(w.kp("bob"), payee_claim_payload(g.id()))}});
  auto replayed = replay_accounts(w.params, w.ledger.membership, w.ledger.chains, w.ledger.arbitration);
  for (const auto& [a, acct] : w.ledger.accounts) {
    EXPECT_EQ(replayed[a].balance, static_cast<std::int64_t>(acct.balance));
    EXPECT_EQ(replayed[a].deposit, static_cast<std::int64_t>(acct.deposit));
  }
}
