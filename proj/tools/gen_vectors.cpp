// Writes the cross-implementation test vectors: hashes, keys, addresses,
// signatures, sharding formulas, and one full Guarantee chain plus a
// withdrawal chain. Everything derives from fixed seeds, and Ed25519 is
// deterministic, so the file is reproducible byte for byte.
#include <fstream>
#include <iostream>

#include "pretrust/pretrust.hpp"

using namespace pretrust;

namespace {

Json key_entry(const std::string& label) {
  auto seed = seed_from(label);
  auto kp = keygen(seed);
  return Json{{"label", label},
              {"seed", seed.hex()},
              {"pk", kp.pk.hex()},
              {"address", derive_address(kp.pk).hex()}};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_vectors <out.json>\n";
    return 2;
  }

  Json sha = Json::array();
  for (std::string in : {"", "abc", "pretrust", "The quick brown fox jumps over the lazy dog"})
    sha.push_back({{"input_hex", to_hex(as_bytes(in))}, {"digest", hash_digest(in).hex()}});

  Json sigs = Json::array();
  for (int i = 0; i < 5; ++i) {
    auto label = "pretrust/vector/key/" + std::to_string(i);
    auto kp = keygen(seed_from(label));
    auto msg = "message " + std::to_string(i);
    auto e = key_entry(label);
    e["message_hex"] = to_hex(as_bytes(msg));
    e["signature"] = sign(kp, as_bytes(msg)).bytes.hex();
    sigs.push_back(e);
  }

  // Sharding: a global hash from four end-block hashes, then shard
  // placements under it for a handful of addresses.
  std::vector<Digest> ends;
  for (int i = 0; i < 4; ++i) ends.push_back(hash_digest("end block " + std::to_string(i)));
  const unsigned shard_bits = 2;
  const auto gh = compute_global_hash(ends, shard_bits);
  Json placements = Json::array();
  std::vector<Address> addrs;
  for (int i = 0; i < 8; ++i) {
    auto a = derive_address(keygen(seed_from("pretrust/vector/guarantor/" + std::to_string(i))).pk);
    addrs.push_back(a);
    placements.push_back({{"address", a.hex()},
                          {"guarantor_shard", guarantor_shard(gh, a, shard_bits)},
                          {"tx_shard", assign_tx_shard(a, shard_bits)}});
  }
  const auto tx_id = hash_digest("election input");
  Json election = Json::array();
  for (const auto& a : elect_guarantor(addrs, tx_id)) election.push_back(a.hex());
  Json ends_json = Json::array();
  for (const auto& d : ends) ends_json.push_back(d.hex());
  Json sharding{{"shard_bits", shard_bits},
                {"end_blocks", ends_json},
                {"global_hash", gh.hex()},
                {"genesis_seed", 42},
                {"genesis_global_hash", genesis_global_hash(42).hex()},
                {"placements", placements},
                {"election_id", tx_id.hex()},
                {"election_order", election}};

  // Guarantee chain with a four-member roster.
  std::vector<std::string> roster_labels;
  std::vector<KeyPair> roster;
  for (int i = 0; i < 4; ++i) {
    roster_labels.push_back("pretrust/vector/roster/" + std::to_string(i));
    roster.push_back(keygen(seed_from(roster_labels.back())));
  }
  const std::string payer_label = "pretrust/vector/payer";
  const std::string payee_label = "pretrust/vector/payee";
  const auto payer = keygen(seed_from(payer_label));
  const auto payee = keygen(seed_from(payee_label));
  const EpochIndex epoch = 3;
  const ShardId shard = 1;
  auto tx = assemble_txinfo(payer, payee, 100, 5, 7, 2).value();
  const BlockExpectation e{assign_tx_shard(tx.payer, shard_bits), 13, 15};
  auto pg1 = issue_pre_guarantee1(roster[0], tx, 11, e);
  auto pg2 = countersign_pre_guarantee1(payer, pg1);
  auto g = seal_guarantee(roster, epoch, shard, pg2);
  Json roster_json = Json::array();
  for (const auto& l : roster_labels) roster_json.push_back(key_entry(l));
  Json chain{{"roster", roster_json},
             {"payer", key_entry(payer_label)},
             {"payee", key_entry(payee_label)},
             {"amount", tx.amount},
             {"guarantee_fee", tx.guarantee_fee},
             {"payer_sn", tx.payer_sn},
             {"payee_sn", tx.payee_sn},
             {"guar_sn", pg1.guar_sn},
             {"expectation", {{"shard", e.shard}, {"height_min", e.height_min}, {"height_max", e.height_max}}},
             {"gsig_epoch", epoch},
             {"gsig_shard", shard},
             {"threshold", group_threshold(roster.size())},
             {"txinfo_id", tx.id.hex()},
             {"txinfo", to_hex(encode(tx))},
             {"preguarantee1", to_hex(encode(pg1))},
             {"preguarantee2", to_hex(encode(pg2))},
             {"guarantee", to_hex(encode(g))}};

  const std::string tee_label = "pretrust/vector/tee";
  const auto tee = keygen(seed_from(tee_label));
  auto req = make_withdrawal_request(payer, 40, 0);
  auto check = make_withdrawal_check(roster, epoch, shard, req);
  auto cert = issue_certification(tee, 123456, req.addr, req.token, request_digest(req));
  Json withdrawal{{"tee", key_entry(tee_label)},
                  {"token", req.token},
                  {"serial", req.serial},
                  {"time_ms", cert.time},
                  {"request", to_hex(encode(req))},
                  {"request_digest", request_digest(req).hex()},
                  {"check", to_hex(encode(check))},
                  {"certification", to_hex(encode(cert))},
                  {"certification_digest", certification_digest(cert).hex()}};

  Json doc{{"format", "pretrust-vectors-1"},
           {"encoding", "field = u64 big-endian length || content; integers are 8-byte big-endian"},
           {"sha256", sha},
           {"signatures", sigs},
           {"sharding", sharding},
           {"guarantee_chain", chain},
           {"withdrawal_chain", withdrawal}};
  std::ofstream out(argv[1], std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << '\n';
  return out ? 0 : 1;
}
