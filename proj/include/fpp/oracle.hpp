#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"
#include "passage.hpp"
#include "stats.hpp"
#include "time.hpp"
#include "weight_field.hpp"

namespace fpp {

class InstanceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The lattice graph induced on the vertex box [lo, hi] (inclusive).
template <std::size_t D>
struct BoxGraph {
  LatticePoint<D> lo{}, hi{};
  std::vector<LatticePoint<D>> vertices;
  std::vector<Edge<D>> edges;
  // adjacency[v] = (neighbour, edge index), neighbours in ascending order
  std::vector<std::vector<std::pair<int, int>>> adjacency;

  int index_of(const LatticePoint<D>& x) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), x);
    if (it == vertices.end() || *it != x) return -1;
    return static_cast<int>(it - vertices.begin());
  }
};

template <std::size_t D>
BoxGraph<D> make_box_graph(const LatticePoint<D>& lo, const LatticePoint<D>& hi) {
  BoxGraph<D> g;
  g.lo = lo;
  g.hi = hi;
  double count = 1;
  for (std::size_t i = 0; i < D; ++i) {
    if (hi[i] < lo[i]) throw std::invalid_argument("box with hi < lo");
    count *= static_cast<double>(hi[i] - lo[i] + 1);
  }
  if (count > 1e6) throw InstanceTooLarge("box too large for brute force");
  LatticePoint<D> x = lo;
  while (true) {
    g.vertices.push_back(x);
    std::size_t j = D;
    bool done = true;
    while (j-- > 0) {
      if (x[j] < hi[j]) {
        ++x[j];
        done = false;
        break;
      }
      x[j] = lo[j];
    }
    if (done) break;
  }
  std::sort(g.vertices.begin(), g.vertices.end());
  for (const auto& v : g.vertices)
    for (std::size_t a = 0; a < D; ++a)
      if (v[a] < hi[a]) g.edges.push_back(Edge<D>::from_base(v, static_cast<int>(a)));
  std::sort(g.edges.begin(), g.edges.end());
  g.adjacency.resize(g.vertices.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const int a = g.index_of(g.edges[e].a()), b = g.index_of(g.edges[e].b());
    g.adjacency[a].push_back({b, static_cast<int>(e)});
    g.adjacency[b].push_back({a, static_cast<int>(e)});
  }
  for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
  return g;
}

// Every simple path from s to t, as vertex index sequences.
template <std::size_t D>
std::vector<std::vector<int>> simple_paths(const BoxGraph<D>& g, int s, int t, std::size_t cap = 5'000'000) {
  std::vector<std::vector<int>> out;
  std::vector<int> stack{s};
  std::vector<char> on(g.vertices.size(), 0);
  on[s] = 1;
  // Iterative DFS: next[k] is the adjacency position to try at depth k.
  std::vector<std::size_t> next{0};
  while (!stack.empty()) {
    const int v = stack.back();
    if (v == t) {
      out.push_back(stack);
      if (out.size() > cap) throw InstanceTooLarge("too many simple paths");
      on[v] = 0;
      stack.pop_back();
      next.pop_back();
      continue;
    }
    std::size_t& k = next.back();
    if (k < g.adjacency[v].size()) {
      const int w = g.adjacency[v][k++].first;
      if (!on[w]) {
        on[w] = 1;
        stack.push_back(w);
        next.push_back(0);
      }
    } else {
      on[v] = 0;
      stack.pop_back();
      next.pop_back();
    }
  }
  return out;
}

template <std::size_t D>
struct BruteForceResult {
  Time time;
  Path<D> path;
  std::size_t paths_enumerated = 0;
};

// Minimum over all simple paths inside the box. Ties go to the path whose
// reversed vertex sequence is lexicographically least, which is the path the
// search's smallest-predecessor rule produces.
template <EdgeWeights F>
BruteForceResult<F::dimension> brute_force_passage(const F& field, const LatticePoint<F::dimension>& lo,
                                                   const LatticePoint<F::dimension>& hi,
                                                   const LatticePoint<F::dimension>& s,
                                                   const LatticePoint<F::dimension>& t) {
  constexpr std::size_t D = F::dimension;
  const auto g = make_box_graph(lo, hi);
  const int si = g.index_of(s), ti = g.index_of(t);
  if (si < 0 || ti < 0) throw std::invalid_argument("endpoint outside the box");
  std::vector<Time> w(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) w[e] = Time::from_weight(field.weight(g.edges[e]));
  BruteForceResult<D> best;
  best.time = Time::infinity();
  bool found = false;
  for (const auto& p : simple_paths(g, si, ti)) {
    ++best.paths_enumerated;
    Time c;
    for (std::size_t i = 1; i < p.size(); ++i) {
      for (const auto& [nb, e] : g.adjacency[p[i - 1]])
        if (nb == p[i]) c += w[e];
    }
    Path<D> path;
    for (int v : p) path.push_back(g.vertices[v]);
    const bool better =
        !found || c < best.time ||
        (c == best.time &&
         std::lexicographical_compare(path.rbegin(), path.rend(), best.path.rbegin(), best.path.rend()));
    if (better) {
      best.time = c;
      best.path = std::move(path);
      found = true;
    }
  }
  if (!found) throw DisconnectedError("no path inside the box");
  return best;
}

template <std::size_t D>
struct ExactInstance {
  LatticePoint<D> lo{}, hi{};
  LatticePoint<D> source{}, target{};
};

// Full law of the box-restricted passage time under i.i.d. two-point weights.
struct ExactDistribution {
  std::vector<Time> support_ticks;
  std::vector<double> support;
  std::vector<double> pmf;
  std::string instance;
  std::size_t edges = 0;
  std::size_t paths = 0;

  double mean() const {
    double m = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) m += pmf[i] * support[i];
    return m;
  }
  double variance() const {
    const double m = mean();
    double v = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) v += pmf[i] * (support[i] - m) * (support[i] - m);
    return v;
  }
  double total() const {
    double s = 0;
    for (double p : pmf) s += p;
    return s;
  }
  // P(T > x) or P(T < x), compared exactly.
  double tail(Side side, double x) const {
    double s = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      const bool hit = side == Side::upper ? above(support_ticks[i], x) : below(support_ticks[i], x);
      if (hit) s += pmf[i];
    }
    return s;
  }
};

inline constexpr std::size_t kMaxExactEdges = 24;

template <std::size_t D>
ExactDistribution exact_tail_distribution(const ExactInstance<D>& inst, const TwoPoint& law) {
  validate_distribution(law, D);
  const auto g = make_box_graph(inst.lo, inst.hi);
  if (g.edges.size() > kMaxExactEdges)
    throw InstanceTooLarge("exact enumeration limited to " + std::to_string(kMaxExactEdges) + " edges");
  const int si = g.index_of(inst.source), ti = g.index_of(inst.target);
  if (si < 0 || ti < 0) throw std::invalid_argument("endpoint outside the box");

  const Time low = Time::from_weight(quantize_weight(law.low));
  const Time high = Time::from_weight(quantize_weight(law.high));
  const Time wmin = std::min(low, high), wmax = std::max(low, high);

  // Edge masks of the simple paths that can be optimal in some configuration.
  struct P {
    std::uint32_t mask;
    std::int64_t len;
  };
  std::vector<P> paths;
  const auto all = simple_paths(g, si, ti);
  std::int64_t shortest = std::numeric_limits<std::int64_t>::max();
  for (const auto& p : all) shortest = std::min<std::int64_t>(shortest, static_cast<std::int64_t>(p.size()) - 1);
  for (const auto& p : all) {
    const auto len = static_cast<std::int64_t>(p.size()) - 1;
    if (Time::from_ticks(wmin.ticks() * len) > Time::from_ticks(wmax.ticks() * shortest)) continue;
    std::uint32_t m = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      for (const auto& [nb, e] : g.adjacency[p[i - 1]])
        if (nb == p[i]) m |= std::uint32_t{1} << e;
    paths.push_back({m, len});
  }

  const std::size_t E = g.edges.size();
  std::vector<double> prob_k(E + 1);
  for (std::size_t k = 0; k <= E; ++k)
    prob_k[k] = std::pow(law.p, static_cast<double>(k)) * std::pow(1 - law.p, static_cast<double>(E - k));

  std::map<Time::Ticks, double> law_of_t;
  const Time::Ticks diff = high.ticks() - low.ticks();
  const std::uint64_t configs = std::uint64_t{1} << E;
  for (std::uint64_t c = 0; c < configs; ++c) {
    const double pr = prob_k[std::popcount(c)];
    if (pr == 0) continue;
    Time::Ticks best = Time::infinity().ticks();
    for (const auto& p : paths) {
      const Time::Ticks t = low.ticks() * p.len + diff * std::popcount(p.mask & static_cast<std::uint32_t>(c));
      best = std::min(best, t);
    }
    law_of_t[best] += pr;
  }

  ExactDistribution out;
  for (const auto& [t, pr] : law_of_t) {
    out.support_ticks.push_back(Time::from_ticks(t));
    out.support.push_back(Time::from_ticks(t).value());
    out.pmf.push_back(pr);
  }
  out.edges = E;
  out.paths = paths.size();
  out.instance = "box " + to_string(inst.lo) + ".." + to_string(inst.hi) + ", " + to_string(inst.source) + " -> " +
                 to_string(inst.target) + ", " + describe(law);
  return out;
}

}  // namespace fpp
