#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pretrust/membership.hpp"
#include "pretrust/messages.hpp"

// Mock public chain: the contract account, the membership list written by
// RegisterAccount, and the Withdraw contract. Contract calls take effect
// immediately.
namespace pretrust {

struct WithdrawalLogEntry {
  Address addr;
  Amount token = 0;
  SimTime time = 0;
  Digest certification;
};

struct ContractCall {
  SimTime time = 0;
  std::string contract;  // "RegisterAccount" | "Withdraw"
  Address addr;
  Amount amount = 0;
  bool success = false;
  std::string reason;
};

inline Bytes registration_payload(const Address& addr, Amount deposit, AccountKind kind) {
  Writer w;
  w.str("pretrust.register").bytes(addr.bytes).u64(deposit).str(to_string(kind));
  return std::move(w).take();
}

class PublicChain {
public:
  PublicChain() = default;
  PublicChain(std::map<Address, Amount> balances, PublicKey tee_pk)
      : balances_(std::move(balances)), tee_pk_(tee_pk) {
    for (const auto& [a, v] : balances_) initial_supply_ += v;
  }

  Status register_account(const Address& addr, Amount deposit, AccountKind kind,
                          const Signature& sig, SimTime now = 0) {
    auto refuse = [&](std::string why) -> Status {
      log_.push_back({now, "RegisterAccount", addr, deposit, false, why});
      return fail(std::move(why));
    };
    if (deposit == 0) return refuse("deposit must be positive");
    if (sig.signer() != addr || !verify(registration_payload(addr, deposit, kind), sig))
      return refuse("invalid signature");
    auto it = balances_.find(addr);
    if (it == balances_.end() || it->second < deposit) return refuse("insufficient balance");
    for (const auto& m : membership_)
      if (m.addr == addr) return refuse("already registered");
    it->second -= deposit;
    contract_balance_ += deposit;
    membership_.push_back({addr, kind, deposit, true});
    log_.push_back({now, "RegisterAccount", addr, deposit, true, {}});
    return Done{};
  }

  // Certificates are single use; the window check is inclusive.
  Status withdraw(const WithdrawalCertification& cert, SimTime now, SimTime time_interval) {
    auto refuse = [&](std::string why) -> Status {
      log_.push_back({now, "Withdraw", cert.addr, cert.token, false, why});
      return fail(std::move(why));
    };
    if (!verify_structure(cert, tee_pk_)) return refuse("invalid certification signature");
    if (now < cert.time || now - cert.time > time_interval) return refuse("certification expired");
    auto digest = certification_digest(cert);
    if (redeemed_.contains(digest)) return refuse("certification already redeemed");
    if (contract_balance_ < cert.token) return refuse("contract balance insufficient");
    contract_balance_ -= cert.token;
    balances_[cert.addr] += cert.token;
    redeemed_.insert(digest);
    withdrawn_.push_back({cert.addr, cert.token, now, digest});
    log_.push_back({now, "Withdraw", cert.addr, cert.token, true, {}});
    return Done{};
  }

  const std::vector<MembershipEntry>& read_membership() const noexcept { return membership_; }

  Amount balance_of(const Address& a) const {
    auto it = balances_.find(a);
    return it == balances_.end() ? 0 : it->second;
  }
  const std::map<Address, Amount>& balances() const noexcept { return balances_; }
  Amount contract_balance() const noexcept { return contract_balance_; }
  Amount initial_supply() const noexcept { return initial_supply_; }
  const PublicKey& tee_pk() const noexcept { return tee_pk_; }
  const std::vector<WithdrawalLogEntry>& withdrawn_log() const noexcept { return withdrawn_; }
  const std::vector<ContractCall>& call_log() const noexcept { return log_; }
  bool redeemed(const Digest& cert_digest) const { return redeemed_.contains(cert_digest); }

  Amount total_deposited() const {
    Amount sum = 0;
    for (const auto& m : membership_) sum += m.deposit;
    return sum;
  }
  Amount total_withdrawn() const {
    Amount sum = 0;
    for (const auto& w : withdrawn_) sum += w.token;
    return sum;
  }

  // Snapshot restore path; bypasses the contracts.
  static PublicChain restore(std::map<Address, Amount> balances, Amount contract_balance,
                             Amount initial_supply, std::vector<MembershipEntry> membership,
                             PublicKey tee_pk, std::vector<WithdrawalLogEntry> withdrawn) {
    PublicChain c;
    c.balances_ = std::move(balances);
    c.contract_balance_ = contract_balance;
    c.initial_supply_ = initial_supply;
    c.membership_ = std::move(membership);
    c.tee_pk_ = tee_pk;
    c.withdrawn_ = std::move(withdrawn);
    for (const auto& w : c.withdrawn_) c.redeemed_.insert(w.certification);
    return c;
  }

private:
  std::map<Address, Amount> balances_;
  Amount contract_balance_ = 0;
  Amount initial_supply_ = 0;
  std::vector<MembershipEntry> membership_;
  PublicKey tee_pk_;
  std::set<Digest> redeemed_;
  std::vector<WithdrawalLogEntry> withdrawn_;
  std::vector<ContractCall> log_;
};

}  // namespace pretrust
