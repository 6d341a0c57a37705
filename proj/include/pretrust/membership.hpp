#pragma once

#include <string_view>

#include "pretrust/crypto.hpp"

namespace pretrust {

enum class AccountKind { guarantor, client };

inline std::string_view to_string(AccountKind k) {
  return k == AccountKind::guarantor ? "guarantor" : "client";
}

inline AccountKind account_kind_from(std::string_view s) {
  if (s == "guarantor") return AccountKind::guarantor;
  if (s == "client") return AccountKind::client;
  throw DecodeError("unknown account kind: " + std::string(s));
}

// One row of the on-chain membership list; the credential from which the
// off-chain accounts are created.
struct MembershipEntry {
  Address addr;
  AccountKind kind = AccountKind::client;
  Amount deposit = 0;
  bool active = true;

  bool operator==(const MembershipEntry&) const = default;
};

}  // namespace pretrust
