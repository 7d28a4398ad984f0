#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpp {

template <std::size_t D>
using LatticePoint = std::array<std::int64_t, D>;

template <std::size_t D>
using RealPoint = std::array<double, D>;

// Nearest-neighbour edge in canonical orientation: b = a + e_axis.
template <std::size_t D>
class Edge {
 public:
  Edge(const LatticePoint<D>& p, const LatticePoint<D>& q) {
    int axis = -1;
    for (std::size_t i = 0; i < D; ++i) {
      std::int64_t diff = q[i] - p[i];
      if (diff == 0) continue;
      if ((diff != 1 && diff != -1) || axis >= 0)
        throw std::invalid_argument("edge endpoints are not lattice neighbours");
      axis = static_cast<int>(i);
    }
    if (axis < 0) throw std::invalid_argument("edge endpoints coincide");
    axis_ = axis;
    a_ = p < q ? p : q;
  }

  static Edge from_base(const LatticePoint<D>& a, int axis) {
    Edge e;
    e.a_ = a;
    e.axis_ = axis;
    return e;
  }

  const LatticePoint<D>& a() const { return a_; }
  LatticePoint<D> b() const {
    LatticePoint<D> r = a_;
    ++r[axis_];
    return r;
  }
  int axis() const { return axis_; }

  friend bool operator==(const Edge& x, const Edge& y) { return x.axis_ == y.axis_ && x.a_ == y.a_; }
  friend bool operator<(const Edge& x, const Edge& y) {
    if (x.a_ != y.a_) return x.a_ < y.a_;
    return x.axis_ < y.axis_;
  }

 private:
  Edge() = default;
  LatticePoint<D> a_{};
  int axis_ = 0;
};

template <std::size_t D>
LatticePoint<D> floor_point(const RealPoint<D>& x) {
  LatticePoint<D> r{};
  for (std::size_t i = 0; i < D; ++i) {
    if (!std::isfinite(x[i])) throw std::domain_error("floor_point: non-finite coordinate");
    r[i] = static_cast<std::int64_t>(std::floor(x[i]));
  }
  return r;
}

template <std::size_t D>
RealPoint<D> to_real(const LatticePoint<D>& x) {
  RealPoint<D> r{};
  for (std::size_t i = 0; i < D; ++i) r[i] = static_cast<double>(x[i]);
  return r;
}

template <std::size_t D>
std::int64_t l1_distance(const LatticePoint<D>& x, const LatticePoint<D>& y) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < D; ++i) s += x[i] > y[i] ? x[i] - y[i] : y[i] - x[i];
  return s;
}

template <std::size_t D>
bool adjacent(const LatticePoint<D>& x, const LatticePoint<D>& y) {
  return l1_distance(x, y) == 1;
}

template <std::size_t D>
double dot(const RealPoint<D>& x, const RealPoint<D>& y) {
  double s = 0;
  for (std::size_t i = 0; i < D; ++i) s += x[i] * y[i];
  return s;
}

template <std::size_t D>
double norm(const RealPoint<D>& x) {
  return std::sqrt(dot(x, x));
}

template <std::size_t D>
RealPoint<D> axpy(double a, const RealPoint<D>& x, const RealPoint<D>& y) {
  RealPoint<D> r{};
  for (std::size_t i = 0; i < D; ++i) r[i] = a * x[i] + y[i];
  return r;
}

template <std::size_t D>
RealPoint<D> unit_vector(std::size_t i) {
  RealPoint<D> r{};
  r.at(i) = 1.0;
  return r;
}

template <std::size_t D>
std::string to_string(const LatticePoint<D>& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < D; ++i) {
    if (i) s += ",";
    s += std::to_string(x[i]);
  }
  return s + ")";
}

struct LatticeHash {
  template <std::size_t D>
  std::size_t operator()(const LatticePoint<D>& x) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::size_t i = 0; i < D; ++i) {
      h ^= static_cast<std::uint64_t>(x[i]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    h ^= h >> 31;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

// Path = vertex sequence; consecutive entries are lattice neighbours.
template <std::size_t D>
using Path = std::vector<LatticePoint<D>>;

}  // namespace fpp
