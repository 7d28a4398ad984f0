#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "lattice.hpp"
#include "time.hpp"

namespace fpp {

struct Constant {
  double value;
};
struct Uniform {
  double lo, hi;
};
// Takes `high` with probability p, `low` otherwise.
struct TwoPoint {
  double low, high, p;
};
// Exponential(rate) conditioned on [0, cap].
struct TruncatedExponential {
  double rate, cap;
};

using DistributionSpec = std::variant<Constant, Uniform, TwoPoint, TruncatedExponential>;

class InvalidDistribution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double max_weight(std::size_t d) { return 1.0 / (4.0 * static_cast<double>(d * d)); }

inline std::string describe(const DistributionSpec& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) return "constant(" + std::to_string(v.value) + ")";
        if constexpr (std::is_same_v<T, Uniform>)
          return "uniform(" + std::to_string(v.lo) + "," + std::to_string(v.hi) + ")";
        if constexpr (std::is_same_v<T, TwoPoint>)
          return "two_point(" + std::to_string(v.low) + "," + std::to_string(v.high) + "," +
                 std::to_string(v.p) + ")";
        if constexpr (std::is_same_v<T, TruncatedExponential>)
          return "truncated_exponential(" + std::to_string(v.rate) + "," + std::to_string(v.cap) + ")";
      },
      s);
}

// Throws InvalidDistribution unless the support lies in [0, 1/(4d^2)] and
// the value 0 has probability 0.
inline void validate_distribution(const DistributionSpec& spec, std::size_t d) {
  if (d < 2) throw InvalidDistribution("dimension must be at least 2");
  const double wmax = max_weight(d);
  auto finite = [](double x) {
    if (!std::isfinite(x)) throw InvalidDistribution("non-finite distribution parameter");
  };
  auto in_range = [&](double x, const char* what) {
    finite(x);
    if (x < 0) throw InvalidDistribution(std::string(what) + " is negative");
    if (x > wmax)
      throw InvalidDistribution(std::string(what) + " exceeds w_max = 1/(4d^2) = " + std::to_string(wmax));
  };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) {
          in_range(v.value, "cap");
          if (v.value == 0) throw InvalidDistribution("zero atom present");
        } else if constexpr (std::is_same_v<T, Uniform>) {
          finite(v.lo);
          finite(v.hi);
          if (v.lo > v.hi) throw InvalidDistribution("lo > hi");
          in_range(v.lo, "lo");
          in_range(v.hi, "cap");
          if (v.hi == 0) throw InvalidDistribution("zero atom present");
        } else if constexpr (std::is_same_v<T, TwoPoint>) {
          in_range(v.low, "low value");
          in_range(v.high, "cap");
          finite(v.p);
          if (v.p < 0 || v.p > 1) throw InvalidDistribution("p outside [0,1]");
          if ((v.low == 0 && v.p < 1) || (v.high == 0 && v.p > 0))
            throw InvalidDistribution("zero atom present");
        } else if constexpr (std::is_same_v<T, TruncatedExponential>) {
          finite(v.rate);
          if (!(v.rate > 0)) throw InvalidDistribution("rate must be positive");
          in_range(v.cap, "cap");
          if (v.cap == 0) throw InvalidDistribution("zero atom present");
        }
      },
      spec);
}

// Inverse CDF at u in (0,1).
inline double quantile(const DistributionSpec& spec, double u) {
  return std::visit(
      [u](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) return v.value;
        if constexpr (std::is_same_v<T, Uniform>) return v.lo + (v.hi - v.lo) * u;
        if constexpr (std::is_same_v<T, TwoPoint>) return u < v.p ? v.high : v.low;
        if constexpr (std::is_same_v<T, TruncatedExponential>) {
          double x = -std::log1p(-u * -std::expm1(-v.rate * v.cap)) / v.rate;
          return x > v.cap ? v.cap : x;
        }
      },
      spec);
}

inline double support_min(const DistributionSpec& spec) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) return v.value;
        if constexpr (std::is_same_v<T, Uniform>) return v.lo;
        if constexpr (std::is_same_v<T, TwoPoint>) {
          if (v.p == 1) return v.high;
          if (v.p == 0) return v.low;
          return std::min(v.low, v.high);
        }
        if constexpr (std::is_same_v<T, TruncatedExponential>) return 0.0;
      },
      spec);
}

inline double support_max(const DistributionSpec& spec) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) return v.value;
        if constexpr (std::is_same_v<T, Uniform>) return v.hi;
        if constexpr (std::is_same_v<T, TwoPoint>) {
          if (v.p == 1) return v.high;
          if (v.p == 0) return v.low;
          return std::max(v.low, v.high);
        }
        if constexpr (std::is_same_v<T, TruncatedExponential>) return v.cap;
      },
      spec);
}

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t keyed_hash(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  std::uint64_t k = 0;
  for (std::uint64_t w : words) {
    ++k;
    h = mix64(h ^ mix64(w + k * 0x9e3779b97f4a7c15ULL));
  }
  return h;
}

// 53 high bits, centred in their cell: strictly inside (0,1).
inline double to_unit_interval(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1p-53;
}

// Stateless i.i.d. environment keyed by (seed, replica, edge).
template <std::size_t D>
class WeightField {
 public:
  static constexpr std::size_t dimension = D;

  WeightField(std::uint64_t seed, DistributionSpec dist, std::uint64_t replica = 0)
      : seed_(seed), replica_(replica), dist_(dist) {
    validate_distribution(dist_, D);
    key_ = mix64(mix64(seed_ ^ 0x243f6a8885a308d3ULL) ^ (replica_ * 0x9e3779b97f4a7c15ULL + 0x13198a2e03707344ULL));
  }

  double weight(const Edge<D>& e) const {
    std::uint64_t h = mix64(key_ ^ static_cast<std::uint64_t>(e.axis()));
    for (std::size_t i = 0; i < D; ++i) {
      h = mix64(h ^ (static_cast<std::uint64_t>(e.a()[i]) + (i + 1) * 0x9e3779b97f4a7c15ULL));
    }
    return quantize_weight(quantile(dist_, to_unit_interval(h)));
  }

  WeightField reseed(std::uint64_t replica) const { return WeightField(seed_, dist_, replica); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replica() const { return replica_; }
  const DistributionSpec& distribution() const { return dist_; }
  static constexpr double max_weight() { return fpp::max_weight(D); }
  double min_weight() const { return support_min(dist_); }

 private:
  std::uint64_t seed_;
  std::uint64_t replica_;
  DistributionSpec dist_;
  std::uint64_t key_ = 0;
};

template <class F>
concept EdgeWeights = requires(const F& f, const Edge<F::dimension>& e) {
  { f.weight(e) } -> std::convertible_to<double>;
};

template <EdgeWeights F>
double sample_weight(const F& field, const Edge<F::dimension>& e) {
  return field.weight(e);
}

template <std::size_t D>
WeightField<D> reseed(const WeightField<D>& f, std::uint64_t replica) {
  return f.reseed(replica);
}

// A base field with some edges overridden; used for planted fixtures.
// Override values are checked against (0, w_max] on every use.
template <EdgeWeights Base>
class PlantedField {
 public:
  static constexpr std::size_t dimension = Base::dimension;
  using Override = std::function<std::optional<double>(const Edge<dimension>&)>;

  PlantedField(Base base, Override over) : base_(std::move(base)), over_(std::move(over)) {}

  double weight(const Edge<dimension>& e) const {
    if (auto w = over_(e)) {
      if (!(*w > 0) || *w > fpp::max_weight(dimension))
        throw InvalidDistribution("planted weight outside (0, w_max]");
      return quantize_weight(*w);
    }
    return base_.weight(e);
  }

  const Base& base() const { return base_; }

 private:
  Base base_;
  Override over_;
};

}  // namespace fpp
