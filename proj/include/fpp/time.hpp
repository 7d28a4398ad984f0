#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace fpp {

// Passage time stored as an exact integer multiple of 2^-100.
//
// Every sampled weight is rounded onto this grid, so sums of weights never
// round and two different summation orders give the same value.
class Time {
 public:
  using Ticks = __int128;
  static constexpr int kFractionBits = 100;

  constexpr Time() = default;

  static constexpr Time from_ticks(Ticks t) {
    Time r;
    r.ticks_ = t;
    return r;
  }

  // w must be a finite non-negative double on the 2^-100 grid
  // (see quantize_weight).
  static Time from_weight(double w) {
    const auto bits = std::bit_cast<std::uint64_t>(w);
    const int biased = static_cast<int>(bits >> 52) & 0x7ff;
    if (biased == 0) return from_ticks(0);
    const Ticks mant = static_cast<Ticks>((bits & ((std::uint64_t{1} << 52) - 1)) | (std::uint64_t{1} << 52));
    const int shift = biased - 1075 + kFractionBits;
    return from_ticks(shift >= 0 ? mant << shift : mant >> -shift);
  }

  static constexpr Time infinity() {
    return from_ticks(std::numeric_limits<Ticks>::max());
  }

  constexpr Ticks ticks() const { return ticks_; }
  constexpr bool is_infinite() const { return ticks_ == std::numeric_limits<Ticks>::max(); }

  double value() const {
    if (is_infinite()) return std::numeric_limits<double>::infinity();
    return std::ldexp(static_cast<double>(ticks_), -kFractionBits);
  }

  constexpr Time operator+(Time o) const { return from_ticks(ticks_ + o.ticks_); }
  constexpr Time operator-(Time o) const { return from_ticks(ticks_ - o.ticks_); }
  constexpr Time& operator+=(Time o) {
    ticks_ += o.ticks_;
    return *this;
  }

  friend constexpr bool operator==(Time a, Time b) { return a.ticks_ == b.ticks_; }
  friend constexpr bool operator!=(Time a, Time b) { return a.ticks_ != b.ticks_; }
  friend constexpr bool operator<(Time a, Time b) { return a.ticks_ < b.ticks_; }
  friend constexpr bool operator<=(Time a, Time b) { return a.ticks_ <= b.ticks_; }
  friend constexpr bool operator>(Time a, Time b) { return a.ticks_ > b.ticks_; }
  friend constexpr bool operator>=(Time a, Time b) { return a.ticks_ >= b.ticks_; }

 private:
  Ticks ticks_ = 0;
};

// Round a non-negative weight onto the tick grid.
inline double quantize_weight(double w) {
  if (w >= 0x1p-48) return w;  // ulp(w) is already a multiple of 2^-100
  return std::ldexp(std::nearbyint(std::ldexp(w, Time::kFractionBits)), -Time::kFractionBits);
}

namespace detail {

inline Time::Ticks scaled_floor(double x) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite threshold");
  double s = std::floor(std::ldexp(x, Time::kFractionBits));
  if (std::fabs(s) >= 0x1p126) throw std::domain_error("threshold out of range");
  return static_cast<Time::Ticks>(s);
}

inline Time::Ticks scaled_ceil(double x) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite threshold");
  double s = std::ceil(std::ldexp(x, Time::kFractionBits));
  if (std::fabs(s) >= 0x1p126) throw std::domain_error("threshold out of range");
  return static_cast<Time::Ticks>(s);
}

}  // namespace detail

// Exact comparisons between a time and a real threshold.
inline bool at_most(Time t, double x) { return t.ticks() <= detail::scaled_floor(x); }
inline bool below(Time t, double x) { return t.ticks() < detail::scaled_ceil(x); }
inline bool at_least(Time t, double x) { return !below(t, x); }
inline bool above(Time t, double x) { return !at_most(t, x); }

}  // namespace fpp
