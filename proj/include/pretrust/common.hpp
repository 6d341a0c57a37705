#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace pretrust {

using Amount = std::uint64_t;     // smallest token unit
using Counter = std::uint64_t;    // txSN / guarSN
using Height = std::uint64_t;
using EpochIndex = std::uint64_t;
using ShardId = std::uint32_t;
using SimTime = std::uint64_t;    // milliseconds of virtual time

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// A protocol-level refusal. Carries the guard that tripped so tests and
// traces can tell FAILURE paths apart.
struct Failure {
  std::string reason;
};

template <typename T>
class Outcome {
public:
  Outcome(T value) : state_(std::move(value)) {}
  Outcome(Failure failure) : state_(std::move(failure)) {}

  [[nodiscard]] bool ok() const noexcept { return state_.index() == 0; }
  explicit operator bool() const noexcept { return ok(); }

  T& value() & {
    if (!ok()) throw Error("outcome holds failure: " + failure().reason);
    return std::get<0>(state_);
  }
  const T& value() const& {
    if (!ok()) throw Error("outcome holds failure: " + failure().reason);
    return std::get<0>(state_);
  }
  T&& value() && {
    if (!ok()) throw Error("outcome holds failure: " + failure().reason);
    return std::get<0>(std::move(state_));
  }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

  const Failure& failure() const {
    static const Failure none{};
    return ok() ? none : std::get<1>(state_);
  }

private:
  std::variant<T, Failure> state_;
};

struct Done {};
using Status = Outcome<Done>;

inline Failure fail(std::string reason) { return Failure{std::move(reason)}; }

// Non-negative rational used for the collateral ratio, fee share and the
// arbitration weights. Token arithmetic stays integral: callers pick floor or
// ceil explicitly.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  constexpr Ratio() = default;
  constexpr Ratio(std::uint64_t n, std::uint64_t d = 1) : num(n), den(d) {
    if (den == 0) throw ConfigError("ratio with zero denominator");
  }

  Amount floor_of(Amount x) const {
    return static_cast<Amount>((static_cast<unsigned __int128>(x) * num) / den);
  }
  Amount ceil_of(Amount x) const {
    auto p = static_cast<unsigned __int128>(x) * num;
    return static_cast<Amount>((p + den - 1) / den);
  }

  friend bool operator==(const Ratio& a, const Ratio& b) {
    return static_cast<unsigned __int128>(a.num) * b.den ==
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend bool operator<(const Ratio& a, const Ratio& b) {
    return static_cast<unsigned __int128>(a.num) * b.den <
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend bool operator<=(const Ratio& a, const Ratio& b) { return !(b < a); }
  friend Ratio operator+(const Ratio& a, const Ratio& b) {
    return Ratio{a.num * b.den + b.num * a.den, a.den * b.den};
  }
};

// Uniform draw in [0, bound) by rejection sampling on the raw 64-bit output.
// std::uniform_int_distribution is implementation-defined, so it is avoided
// to keep draws identical across standard libraries.
template <typename Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  if (bound == 0) throw Error("uniform_below: empty range");
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  for (;;) {
    std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

}  // namespace pretrust
