#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "detail/bucket_queue.hpp"
#include "detail/radix_heap.hpp"
#include "detail/tile_map.hpp"
#include "geometry.hpp"
#include "lattice.hpp"
#include "time.hpp"
#include "weight_field.hpp"

namespace fpp {

class DisconnectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The search stopped at its expansion cap; the answer is unknown.
class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <std::size_t D>
class TargetSet {
 public:
  TargetSet() = default;
  static TargetSet points(std::vector<LatticePoint<D>> pts) {
    TargetSet t;
    t.points_ = std::move(pts);
    t.lookup_.insert(t.points_.begin(), t.points_.end());
    return t;
  }
  static TargetSet point(const LatticePoint<D>& p) { return points({p}); }
  static TargetSet plane(const PlaneSet<D>& p) {
    TargetSet t;
    t.plane_ = p;
    return t;
  }

  bool is_plane() const { return plane_.has_value(); }
  const std::vector<LatticePoint<D>>& finite_points() const { return points_; }
  bool contains(const LatticePoint<D>& x) const {
    if (plane_) return plane_->contains(x);
    return lookup_.count(x) > 0;
  }

 private:
  std::vector<LatticePoint<D>> points_;
  std::unordered_set<LatticePoint<D>, LatticeHash> lookup_;
  std::optional<PlaneSet<D>> plane_;
};

template <std::size_t D>
struct QuerySpec {
  Region<D> region = Everything{};
  std::vector<LatticePoint<D>> sources;
  TargetSet<D> target;
  std::optional<std::uint64_t> budget;
};

template <std::size_t D>
std::vector<LatticePoint<D>> floor_points(const std::vector<RealPoint<D>>& xs) {
  std::vector<LatticePoint<D>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(floor_point(x));
  return out;
}

template <std::size_t D>
QuerySpec<D> point_query(const LatticePoint<D>& x, const LatticePoint<D>& y, Region<D> region = Everything{},
                         std::optional<std::uint64_t> budget = std::nullopt) {
  return QuerySpec<D>{std::move(region), {x}, TargetSet<D>::point(y), budget};
}

template <std::size_t D>
struct PassageResult {
  Time time;
  Path<D> path;
  std::uint64_t nodes_expanded = 0;
  LatticePoint<D> src_hit{};
  LatticePoint<D> dst_hit{};
};

namespace detail {

template <std::size_t D>
LatticePoint<D> step(LatticePoint<D> x, int dir) {
  if (dir < static_cast<int>(D))
    ++x[dir];
  else
    --x[dir - static_cast<int>(D)];
  return x;
}

template <std::size_t D>
constexpr int opposite(int dir) {
  return dir < static_cast<int>(D) ? dir + static_cast<int>(D) : dir - static_cast<int>(D);
}

template <std::size_t D>
Edge<D> edge_towards(const LatticePoint<D>& x, int dir) {
  if (dir < static_cast<int>(D)) return Edge<D>::from_base(x, dir);
  return Edge<D>::from_base(step<D>(x, dir), dir - static_cast<int>(D));
}

// Best-first search with frontier order (time, lexicographic vertex) and
// lexicographically smallest predecessor on exact time ties.
template <EdgeWeights F>
class Search {
 public:
  static constexpr std::size_t D = F::dimension;

  Search(const F& field, const Region<D>& region, std::optional<std::uint64_t> budget)
      : field_(field), region_(region), budget_(budget), everything_(region.index() == 0) {}

  bool add_source(const LatticePoint<D>& x) {
    if (!inside(x)) return false;
    Cell& c = map_.at(x);
    if (c.dist == 0) return true;
    c.dist = 0;
    c.pred = -1;
    heap_.push(0, x);
    return true;
  }

  // Settles vertices until stop(x, dist) returns true; returns that vertex,
  // or nullopt when the component is exhausted.
  template <class Stop>
  std::optional<LatticePoint<D>> run(Stop&& stop) {
    while (!heap_.empty()) {
      auto [key, x] = heap_.pop();
      Entry e{static_cast<Time::Ticks>(key), x};
      Cell& c = map_.at(e.x);
      if (c.settled || e.t != c.dist) continue;
      c.settled = 1;
      ++expanded_;
      if (budget_ && expanded_ > *budget_) throw BudgetExhausted("expansion budget exhausted");
      if (stop(e.x, Time::from_ticks(c.dist))) return e.x;
      for (int dir = 0; dir < 2 * static_cast<int>(D); ++dir) {
        LatticePoint<D> y = step<D>(e.x, dir);
        Cell& cy = map_.at(y);
        if (cy.settled) continue;
        if (cy.region == 0) cy.region = inside(y) ? 1 : 2;
        if (cy.region == 2) continue;
        const Time::Ticks nd = c.dist + Time::from_weight(field_.weight(edge_towards<D>(e.x, dir))).ticks();
        if (nd < cy.dist) {
          cy.dist = nd;
          cy.pred = static_cast<std::int8_t>(opposite<D>(dir));
          heap_.push(static_cast<typename Heap::Key>(nd), y);
        } else if (nd == cy.dist && e.x < step<D>(y, cy.pred)) {
          cy.pred = static_cast<std::int8_t>(opposite<D>(dir));
        }
      }
    }
    return std::nullopt;
  }

  Path<D> path_to(const LatticePoint<D>& x) const {
    Path<D> p{x};
    const Cell* c = map_.find(x);
    while (c && c->pred >= 0) {
      p.push_back(step<D>(p.back(), c->pred));
      c = map_.find(p.back());
    }
    std::reverse(p.begin(), p.end());
    return p;
  }

  std::optional<Time> settled_time(const LatticePoint<D>& x) const {
    const Cell* c = map_.find(x);
    if (!c || !c->settled) return std::nullopt;
    return Time::from_ticks(c->dist);
  }

  std::uint64_t expanded() const { return expanded_; }

 private:
  struct Cell {
    Time::Ticks dist = Time::infinity().ticks();
    std::int8_t pred = -1;
    std::uint8_t settled = 0;
    std::uint8_t region = 0;  // 0 unknown, 1 inside, 2 outside
  };
  struct Entry {
    Time::Ticks t;
    LatticePoint<D> x;
  };
  using Heap = RadixHeap<LatticePoint<D>>;

  bool inside(const LatticePoint<D>& x) const { return everything_ || region_contains(region_, x); }

  const F& field_;
  const Region<D>& region_;
  std::optional<std::uint64_t> budget_;
  bool everything_;
  TileMap<D, Cell> map_;
  Heap heap_;
  std::uint64_t expanded_ = 0;
};

}  // namespace detail

template <EdgeWeights F>
PassageResult<F::dimension> passage_time(const F& field, const QuerySpec<F::dimension>& q) {
  constexpr std::size_t D = F::dimension;
  if (q.sources.empty()) throw std::invalid_argument("passage_time: empty source set");
  if (!q.target.is_plane() && q.target.finite_points().empty())
    throw std::invalid_argument("passage_time: empty target set");
  detail::Search<F> s(field, q.region, q.budget);
  bool any = false;
  for (const auto& x : q.sources) any = s.add_source(x) || any;
  if (!any) throw DisconnectedError("no source point lies in the region");
  auto hit = s.run([&](const LatticePoint<D>& x, Time) { return q.target.contains(x); });
  if (!hit) throw DisconnectedError("no admissible path from source to target");
  PassageResult<D> r;
  r.time = *s.settled_time(*hit);
  r.path = s.path_to(*hit);
  r.nodes_expanded = s.expanded();
  r.src_hit = r.path.front();
  r.dst_hit = *hit;
  return r;
}

template <EdgeWeights F>
Path<F::dimension> geodesic(const F& field, const QuerySpec<F::dimension>& q) {
  return passage_time(field, q).path;
}

// Times from the source set to each listed target (nullopt when unreachable).
template <EdgeWeights F>
std::vector<std::optional<Time>> times_to_targets(const F& field, const Region<F::dimension>& region,
                                                  const std::vector<LatticePoint<F::dimension>>& sources,
                                                  const std::vector<LatticePoint<F::dimension>>& targets,
                                                  std::optional<std::uint64_t> budget = std::nullopt) {
  constexpr std::size_t D = F::dimension;
  std::vector<std::optional<Time>> out(targets.size());
  std::unordered_map<LatticePoint<D>, std::vector<std::size_t>, LatticeHash> where;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (region_contains(region, targets[i])) where[targets[i]].push_back(i);
  std::size_t remaining = where.size();
  if (remaining == 0) return out;
  detail::Search<F> s(field, region, budget);
  bool any = false;
  for (const auto& x : sources) any = s.add_source(x) || any;
  if (!any) return out;
  s.run([&](const LatticePoint<D>& x, Time t) {
    auto it = where.find(x);
    if (it == where.end()) return false;
    for (std::size_t i : it->second) out[i] = t;
    return --remaining == 0;
  });
  return out;
}

namespace detail {

// Exact point-to-point time by simultaneous searches from both ends.
template <EdgeWeights F>
class BidirectionalSearch {
 public:
  static constexpr std::size_t D = F::dimension;

  BidirectionalSearch(const F& field, const Region<D>& region, std::optional<std::uint64_t> budget)
      : field_(field), region_(region), budget_(budget), everything_(region.index() == 0) {}

  std::optional<Time> run(const LatticePoint<D>& s, const LatticePoint<D>& t) {
    if (!inside(s) || !inside(t)) return std::nullopt;
    if (s == t) return Time{};
    side_[0].map.at(s).dist = 0;
    side_[0].heap.push(0, s);
    side_[1].map.at(t).dist = 0;
    side_[1].heap.push(0, t);
    Time::Ticks best = Time::infinity().ticks();
    while (!side_[0].heap.empty() && !side_[1].heap.empty()) {
      const auto k0 = static_cast<Time::Ticks>(side_[0].heap.top_key());
      const auto k1 = static_cast<Time::Ticks>(side_[1].heap.top_key());
      if (k0 + k1 >= best) break;
      const int x = side_[0].heap.size() <= side_[1].heap.size() ? 0 : 1;
      Side& me = side_[x];
      Side& other = side_[1 - x];
      auto [key, u] = me.heap.pop();
      Cell& c = me.map.at(u);
      if (c.settled || static_cast<Time::Ticks>(key) != c.dist) continue;
      c.settled = 1;
      if (budget_ && ++expanded_ > *budget_) throw BudgetExhausted("expansion budget exhausted");
      for (int dir = 0; dir < 2 * static_cast<int>(D); ++dir) {
        LatticePoint<D> v = step<D>(u, dir);
        Cell& cv = me.map.at(v);
        if (cv.region == 0) cv.region = inside(v) ? 1 : 2;
        if (cv.region == 2) continue;
        const Time::Ticks nd = c.dist + Time::from_weight(field_.weight(edge_towards<D>(u, dir))).ticks();
        if (const Cell* o = other.map.find(v); o && o->dist != Time::infinity().ticks())
          best = std::min(best, nd + o->dist);
        if (!cv.settled && nd < cv.dist) {
          cv.dist = nd;
          me.heap.push(static_cast<typename Heap::Key>(nd), v);
        }
      }
    }
    if (best == Time::infinity().ticks()) return std::nullopt;
    return Time::from_ticks(best);
  }

  std::uint64_t expanded() const { return expanded_; }

 private:
  struct Cell {
    Time::Ticks dist = Time::infinity().ticks();
    std::uint8_t settled = 0;
    std::uint8_t region = 0;
  };
  using Heap = RadixHeap<LatticePoint<D>>;
  struct Side {
    TileMap<D, Cell> map;
    Heap heap;
  };

  bool inside(const LatticePoint<D>& x) const { return everything_ || region_contains(region_, x); }

  const F& field_;
  const Region<D>& region_;
  std::optional<std::uint64_t> budget_;
  bool everything_;
  std::array<Side, 2> side_;
  std::uint64_t expanded_ = 0;
};

// Bidirectional search on flat arrays over a box around both endpoints.
// Returns nullopt ("escaped") as soon as a relaxation would leave the window
// while staying in the region; the caller then reruns the tile-map search.
template <EdgeWeights F>
class WindowSearch {
 public:
  static constexpr std::size_t D = F::dimension;
  static constexpr std::size_t kMaxCells = std::size_t{1} << 20;

  struct Outcome {
    bool escaped = false;
    std::optional<Time> time;
  };

  WindowSearch(const F& field, const Region<D>& region, std::optional<std::uint64_t> budget)
      : field_(field), region_(region), budget_(budget), everything_(region.index() == 0),
        region_box_(bounding_box(region)) {}

  // False when no window of acceptable size covers both endpoints.
  bool place(const LatticePoint<D>& s, const LatticePoint<D>& t) {
    std::int64_t l1 = 0;
    for (std::size_t i = 0; i < D; ++i) l1 += s[i] > t[i] ? s[i] - t[i] : t[i] - s[i];
    for (std::int64_t m = l1 - l1 / 4 + 16; m >= 2; m = m * 3 / 4) {
      double cells = 1;
      for (std::size_t i = 0; i < D; ++i) {
        lo_[i] = std::min(s[i], t[i]) - m;
        hi_[i] = std::max(s[i], t[i]) + m;
        if (region_box_) {
          lo_[i] = std::max<std::int64_t>(lo_[i], static_cast<std::int64_t>(std::floor(region_box_->lo[i])) - 1);
          hi_[i] = std::min<std::int64_t>(hi_[i], static_cast<std::int64_t>(std::ceil(region_box_->hi[i])) + 1);
        }
        cells *= static_cast<double>(hi_[i] - lo_[i] + 1);
      }
      if (cells <= static_cast<double>(kMaxCells)) {
        std::size_t stride = 1;
        for (std::size_t i = D; i-- > 0;) {
          stride_[i] = stride;
          stride *= static_cast<std::size_t>(((hi_[i] - lo_[i]) >> kTileBits) + 1);
        }
        cells_ = stride << (kTileBits * D);
        return true;
      }
    }
    return false;
  }

  Outcome run(const LatticePoint<D>& s, const LatticePoint<D>& t) {
    Scratch& sc = scratch();
    if (sc.cells.size() < cells_) sc.cells.resize(cells_);
    if (++sc.gen == 0) {
      for (auto& c : sc.cells) c.stamp = 0;
      sc.gen = 1;
    }
    gen_ = sc.gen;
    cell_ = sc.cells.data();
    Outcome out;
    if (!inside(s) || !inside(t)) return out;
    if (s == t) {
      out.time = Time{};
      return out;
    }
    const std::uint32_t is = index(s), it = index(t);
    touch(is).dist[0] = 0;
    touch(it).dist[1] = 0;
    for (std::size_t k = 0; k < D; ++k) {
      cell_[is].at[k] = static_cast<std::int32_t>(s[k] - lo_[k]);
      cell_[it].at[k] = static_cast<std::int32_t>(t[k] - lo_[k]);
    }
    auto& heap = sc.heap;
    heap[0].clear();
    heap[1].clear();
    heap[0].push(0, is);
    heap[1].push(0, it);
    constexpr Time::Ticks kInf = Time::infinity().ticks();
    Time::Ticks best = kInf;
    while (!heap[0].empty() && !heap[1].empty()) {
      const auto k0 = static_cast<Time::Ticks>(heap[0].top_key());
      const auto k1 = static_cast<Time::Ticks>(heap[1].top_key());
      if (k0 + k1 >= best) break;
      const int x = heap[0].size() <= heap[1].size() ? 0 : 1;
      auto [key, u] = heap[x].pop();
      Cell& c = cell_[u];
      const std::uint8_t done = static_cast<std::uint8_t>(kSettled << x);
      if ((c.flags & done) || static_cast<Time::Ticks>(key) != c.dist[x]) continue;
      c.flags |= done;
      if (budget_ && ++expanded_ > *budget_) throw BudgetExhausted("expansion budget exhausted");
      LatticePoint<D> pu;
      for (std::size_t k = 0; k < D; ++k) pu[k] = lo_[k] + c.at[k];
      for (int dir = 0; dir < 2 * static_cast<int>(D); ++dir) {
        const std::size_t axis = static_cast<std::size_t>(dir) % D;
        const bool up = dir < static_cast<int>(D);
        const std::int64_t coord = pu[axis] + (up ? 1 : -1);
        if (coord < lo_[axis] || coord > hi_[axis]) {
          if (!region_box_ || (coord >= region_box_->lo[axis] && coord <= region_box_->hi[axis])) {
            out.escaped = true;
            return out;
          }
          continue;
        }
        std::array<std::int32_t, D> av = c.at;
        av[axis] = static_cast<std::int32_t>(coord - lo_[axis]);
        const std::uint32_t v = slot(av);
        Cell& cv = touch(v);
        if (!(cv.flags & kKnown)) {
          LatticePoint<D> pv = pu;
          pv[axis] = coord;
          cv.at = av;
          cv.flags |= kKnown | (inside(pv) ? kInside : 0);
        }
        if (!(cv.flags & kInside)) continue;
        const bool open = !(cv.flags & (kSettled << x));
        if (!open && cv.dist[1 - x] == kInf) continue;
        LatticePoint<D> base = pu;
        if (!up) base[axis] = coord;
        const Time::Ticks nd =
            c.dist[x] + Time::from_weight(field_.weight(Edge<D>::from_base(base, static_cast<int>(axis)))).ticks();
        if (cv.dist[1 - x] != kInf) best = std::min(best, nd + cv.dist[1 - x]);
        if (open && nd < cv.dist[x]) {
          cv.dist[x] = nd;
          heap[x].push(static_cast<BucketQueue<std::uint32_t>::Key>(nd), v);
        }
      }
    }
    if (best != kInf) out.time = Time::from_ticks(best);
    return out;
  }

  std::uint64_t expanded() const { return expanded_; }

 private:
  static constexpr std::uint8_t kSettled = 1;  // bit x for side x
  static constexpr std::uint8_t kKnown = 4;
  static constexpr std::uint8_t kInside = 8;

  struct Cell {
    Time::Ticks dist[2];
    std::array<std::int32_t, D> at;  // coordinates relative to lo_
    std::uint32_t stamp = 0;
    std::uint8_t flags = 0;
  };
  struct Scratch {
    std::vector<Cell> cells;
    std::array<BucketQueue<std::uint32_t>, 2> heap;
    std::uint32_t gen = 0;
  };
  static Scratch& scratch() {
    thread_local Scratch s;
    return s;
  }

  Cell& touch(std::uint32_t i) {
    Cell& c = cell_[i];
    if (c.stamp != gen_) {
      c.stamp = gen_;
      c.flags = 0;
      c.dist[0] = c.dist[1] = Time::infinity().ticks();
    }
    return c;
  }

  // Cells are stored tile by tile so that lattice neighbours stay close.
  static constexpr unsigned kTileBits = D == 2 ? 4 : (D == 3 ? 3 : 2);
  static constexpr std::int32_t kTileMask = (1 << kTileBits) - 1;

  std::uint32_t slot(const std::array<std::int32_t, D>& a) const {
    std::size_t tile = 0, local = 0;
    for (std::size_t k = 0; k < D; ++k) {
      tile += static_cast<std::size_t>(a[k] >> kTileBits) * stride_[k];
      local = (local << kTileBits) | static_cast<std::size_t>(a[k] & kTileMask);
    }
    return static_cast<std::uint32_t>((tile << (kTileBits * D)) | local);
  }

  std::uint32_t index(const LatticePoint<D>& x) const {
    std::array<std::int32_t, D> a;
    for (std::size_t k = 0; k < D; ++k) a[k] = static_cast<std::int32_t>(x[k] - lo_[k]);
    return slot(a);
  }

  bool inside(const LatticePoint<D>& x) const { return everything_ || region_contains(region_, x); }

  const F& field_;
  const Region<D>& region_;
  std::optional<std::uint64_t> budget_;
  bool everything_;
  std::optional<Box<D>> region_box_;
  LatticePoint<D> lo_{}, hi_{};
  std::array<std::size_t, D> stride_{};  // in tiles
  std::size_t cells_ = 0;
  std::uint32_t gen_ = 0;
  Cell* cell_ = nullptr;
  std::uint64_t expanded_ = 0;
};

}  // namespace detail

// T_A(x, y) without the geodesic.
template <EdgeWeights F>
Time point_time(const F& field, const LatticePoint<F::dimension>& x, const LatticePoint<F::dimension>& y,
                const Region<F::dimension>& region = Everything{},
                std::optional<std::uint64_t> budget = std::nullopt) {
  detail::WindowSearch<F> w(field, region, budget);
  if (w.place(x, y)) {
    auto o = w.run(x, y);
    if (!o.escaped) {
      if (!o.time) throw DisconnectedError("no admissible path between the points");
      return *o.time;
    }
  }
  detail::BidirectionalSearch<F> s(field, region, budget);
  auto t = s.run(x, y);
  if (!t) throw DisconnectedError("no admissible path between the points");
  return *t;
}

// Sum of weights along a path, in path order.
template <EdgeWeights F>
Time path_time(const F& field, const Path<F::dimension>& p) {
  Time t;
  for (std::size_t i = 1; i < p.size(); ++i) t += Time::from_weight(field.weight(Edge<F::dimension>(p[i - 1], p[i])));
  return t;
}

// Euclidean distance of the farthest vertex from the line anchor + R*direction.
template <std::size_t D>
double max_transversal_deviation(const Path<D>& p, const RealPoint<D>& anchor, const RealPoint<D>& direction) {
  const double n = norm(direction);
  if (!(n > 0)) throw std::invalid_argument("max_transversal_deviation: zero direction");
  double best = 0;
  for (const auto& v : p) {
    RealPoint<D> rel{};
    for (std::size_t i = 0; i < D; ++i) rel[i] = static_cast<double>(v[i]) - anchor[i];
    const double along = dot(rel, direction) / n;
    const double sq = std::max(0.0, dot(rel, rel) - along * along);
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

// Source: floor image of the face through i*K*u parallel to H_u, cut to the
// window. Target: floor image of the face through (i+1)*K*u.
template <EdgeWeights F>
PassageResult<F::dimension> face_to_face_time(const F& field, const Frame<F::dimension>& frame, std::int64_t i,
                                              double K, const Region<F::dimension>& window,
                                              std::optional<std::uint64_t> budget = std::nullopt) {
  constexpr std::size_t D = F::dimension;
  if (!(K > 0)) throw std::invalid_argument("face_to_face_time: K must be positive");
  auto box = bounding_box(window);
  if (!box) throw std::invalid_argument("face_to_face_time: window must be bounded");
  const RealPoint<D> centre = axpy(static_cast<double>(i) * K, frame.u, RealPoint<D>{});
  // Any window point on the plane is within this distance of the centre.
  double radius = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << D); ++mask) {
    RealPoint<D> corner{};
    for (std::size_t j = 0; j < D; ++j) corner[j] = ((mask >> j) & 1) ? box->hi[j] + 1 : box->lo[j] - 1;
    RealPoint<D> rel = axpy(-1.0, centre, corner);
    radius = std::max(radius, norm(rel));
  }
  FaceSpec<D> face{frame, frame.basis[0], 0, radius, std::nullopt, centre};
  face.axial = 0;
  std::vector<LatticePoint<D>> src;
  for (const auto& x : enumerate_face(face))
    if (region_contains(window, x)) src.push_back(x);
  if (src.empty()) throw DisconnectedError("face i does not meet the window");
  const RealPoint<D> next = axpy(static_cast<double>(i + 1) * K, frame.u, RealPoint<D>{});
  QuerySpec<D> q{window, std::move(src), TargetSet<D>::plane(tangent_plane_through(frame, next)), budget};
  return passage_time(field, q);
}

}  // namespace fpp
