#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimators.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "passage.hpp"
#include "weight_field.hpp"

namespace fpp {

// Thrown when T exceeds the slab bound but the lemma's chain could not be
// started (its base case fails at this scale), so no certificate exists.
class SlabChainBroken : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double snap_integer(double x) {
  const double r = std::nearbyint(x);
  return std::fabs(x - r) < 1e-9 ? r : x;
}

// Lattice points of a bounded region, lexicographic.
template <std::size_t D>
std::vector<LatticePoint<D>> lattice_points_in(const Region<D>& r, std::size_t cap = kDefaultFaceCap) {
  auto box = bounding_box(r);
  if (!box) throw std::invalid_argument("lattice_points_in: region must be bounded");
  LatticePoint<D> lo, hi;
  double count = 1;
  for (std::size_t i = 0; i < D; ++i) {
    lo[i] = static_cast<std::int64_t>(std::ceil(box->lo[i] - 1e-9));
    hi[i] = static_cast<std::int64_t>(std::floor(box->hi[i] + 1e-9));
    if (hi[i] < lo[i]) return {};
    count *= static_cast<double>(hi[i] - lo[i] + 1);
  }
  if (count > static_cast<double>(cap)) throw FaceTooLarge("region has too many lattice points");
  std::vector<LatticePoint<D>> out;
  LatticePoint<D> x = lo;
  while (true) {
    if (region_contains(r, x)) out.push_back(x);
    std::size_t i = D;
    while (i-- > 0) {
      if (x[i] < hi[i]) {
        ++x[i];
        break;
      }
      x[i] = lo[i];
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

template <std::size_t D>
bool inside_box(const Box<D>& b, const LatticePoint<D>& x) {
  for (std::size_t i = 0; i < D; ++i) {
    const double c = static_cast<double>(x[i]);
    if (c < b.lo[i] || c > b.hi[i]) return false;
  }
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Slab decomposition

template <std::size_t D>
struct SlabParams {
  std::int64_t N = 64;
  double a = 0.8;
  int M = 2;
  // Face radius is N^{a/2 + m/(2M) - eps^2}.
  double eps = 0;
  RealPoint<D> v = unit_vector<D>(0);
  Frame<D> frame = standard_frame<D>();
  double mu_ref = 0;
  std::size_t face_cap = kDefaultFaceCap;
  std::optional<std::uint64_t> budget;
};

// M = ceil(4 / eps^4).
inline int default_scale_count(double eps) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  return static_cast<int>(std::ceil(4.0 / std::pow(eps, 4)));
}

enum class SlabPair { left, right, spanning };

inline const char* to_string(SlabPair p) {
  switch (p) {
    case SlabPair::left:
      return "left";
    case SlabPair::right:
      return "right";
    default:
      return "spanning";
  }
}

template <std::size_t D>
struct SlabCertificate {
  int m = 0;
  SlabPair pair = SlabPair::spanning;
  std::vector<LatticePoint<D>> from_face;  // the set called L in the pair
  std::vector<LatticePoint<D>> to_face;    // the set called R in the pair
  std::vector<std::size_t> A;              // indices into from_face
  std::size_t covered = 0;                 // |{y : T(A, y) <= time_threshold}|
  std::size_t overshoot = 0;               // |to_face| - covered
  double from_fraction = 0;                // 1 - 2^{M(m-2M)}
  double to_fraction = 0;                  // 1 - 2^{M(m+1-2M)}
  double time_threshold = 0;               // Delta_m mu_ref + N^a / (2M)
};

template <std::size_t D>
struct SlabOutcome {
  std::optional<SlabCertificate<D>> certificate;
  Time direct_time;  // T_Cyl(0, Nv)
  double bound = 0;  // N mu_ref + N^a
  bool certified() const { return certificate.has_value(); }
};

template <std::size_t D>
Cylinder<D> slab_cylinder(const SlabParams<D>& p) {
  const double N = static_cast<double>(p.N);
  Cylinder<D> c;
  c.frame = p.frame;
  c.axis = p.v;
  c.lo = -2 * N;
  c.hi = 2 * N;
  c.height = std::pow(N, (p.a + 1) / 2);
  return c;
}

template <std::size_t D>
double slab_delta(const SlabParams<D>& p, int m) {
  const double N = static_cast<double>(p.N);
  const double M = p.M;
  if (m <= p.M - 2) return std::pow(N, (m + 1) / M) - std::pow(N, m / M);
  return N - 2 * std::pow(N, (p.M - 1) / M);
}

template <std::size_t D>
FaceSpec<D> slab_face_spec(const SlabParams<D>& p, int m, bool right) {
  const double N = static_cast<double>(p.N);
  const double M = p.M;
  FaceSpec<D> f;
  f.frame = p.frame;
  f.axis = p.v;
  f.axial = right ? N - std::pow(N, m / M) : std::pow(N, m / M);
  f.radius = std::pow(N, p.a / 2 + m / (2 * M) - p.eps * p.eps);
  return f;
}

// Smallest m in [1, M-1] with m >= M a - 2.
template <std::size_t D>
int slab_first_scale(const SlabParams<D>& p) {
  const double lo = detail::snap_integer(p.M * p.a - 2);
  return std::max(1, static_cast<int>(std::ceil(lo)));
}

template <std::size_t D>
double slab_from_fraction(const SlabParams<D>& p, int m) {
  return 1 - std::ldexp(1.0, p.M * (m - 2 * p.M));
}
template <std::size_t D>
double slab_to_fraction(const SlabParams<D>& p, int m) {
  return 1 - std::ldexp(1.0, p.M * (m + 1 - 2 * p.M));
}

template <std::size_t D>
void check_slab_params(const SlabParams<D>& p) {
  if (p.N < 1) throw std::invalid_argument("slab: N must be positive");
  if (p.M < 2) throw std::invalid_argument("slab: M must be at least 2");
  if (!(p.a > 0 && p.a <= 1)) throw std::invalid_argument("slab: a must lie in (0,1]");
  if (!(p.mu_ref > 0) || !std::isfinite(p.mu_ref)) throw std::invalid_argument("slab: mu_ref must be positive");
  if (!(p.eps >= 0)) throw std::invalid_argument("slab: eps must be non-negative");
  for (int m = 1; m <= p.M - 1; ++m)
    if (!(slab_delta(p, m) > 0))
      throw std::invalid_argument("slab: Delta_" + std::to_string(m) + " <= 0 for these N and M");
  check_cylinder(slab_cylinder(p));
}

// Runs the contrapositive construction: grows the sets of face points that
// are reachable on schedule, and returns the first pair (in the order
// left m, right m for increasing m, then spanning) where the schedule breaks.
template <EdgeWeights F>
SlabOutcome<F::dimension> slab_certificate(const F& field, const SlabParams<F::dimension>& p) {
  constexpr std::size_t D = F::dimension;
  check_slab_params(p);
  const double N = static_cast<double>(p.N);
  const double M = p.M;
  const double Na = std::pow(N, p.a);
  const Region<D> cyl = slab_cylinder(p);
  const LatticePoint<D> origin{};
  const LatticePoint<D> end = scaled_point(p.v, N);
  const int m0 = slab_first_scale(p);

  std::vector<std::vector<LatticePoint<D>>> left(p.M), right(p.M);
  std::vector<LatticePoint<D>> all_left, all_right;
  for (int m = m0; m <= p.M - 1; ++m) {
    left[m] = enumerate_face(slab_face_spec(p, m, false), p.face_cap);
    right[m] = enumerate_face(slab_face_spec(p, m, true), p.face_cap);
    all_left.insert(all_left.end(), left[m].begin(), left[m].end());
    all_right.insert(all_right.end(), right[m].begin(), right[m].end());
  }
  const auto t_left = times_to_targets(field, cyl, {origin}, all_left, p.budget);
  const auto t_right = times_to_targets(field, cyl, {end}, all_right, p.budget);

  // X'_m: indices x in X_m with T(endpoint, x) <= N^{m/M} mu + m N^a/(2M).
  auto primed = [&](const std::vector<std::optional<Time>>& times, const std::vector<std::vector<LatticePoint<D>>>& faces,
                    int m) {
    std::size_t offset = 0;
    for (int k = m0; k < m; ++k) offset += faces[k].size();
    const double thr = std::pow(N, m / M) * p.mu_ref + m * Na / (2 * M);
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < faces[m].size(); ++j)
      if (times[offset + j] && at_most(*times[offset + j], thr)) idx.push_back(j);
    return idx;
  };

  SlabOutcome<D> out;
  out.bound = N * p.mu_ref + Na;

  auto try_pair = [&](int m, SlabPair kind, const std::vector<LatticePoint<D>>& from, std::vector<std::size_t> A,
                      const std::vector<LatticePoint<D>>& to) -> bool {
    const double from_frac = slab_from_fraction(p, m);
    if (static_cast<double>(A.size()) < from_frac * static_cast<double>(from.size())) return false;
    std::vector<LatticePoint<D>> src;
    for (std::size_t j : A) src.push_back(from[j]);
    const double thr = slab_delta(p, m) * p.mu_ref + Na / (2 * M);
    const auto t = times_to_targets(field, cyl, src, to, p.budget);
    std::size_t covered = 0;
    for (const auto& x : t) covered += x && at_most(*x, thr);
    const double to_frac = slab_to_fraction(p, m);
    if (static_cast<double>(covered) > to_frac * static_cast<double>(to.size())) return false;
    SlabCertificate<D> c;
    c.m = m;
    c.pair = kind;
    c.from_face = from;
    c.to_face = to;
    c.A = std::move(A);
    c.covered = covered;
    c.overshoot = to.size() - covered;
    c.from_fraction = from_frac;
    c.to_fraction = to_frac;
    c.time_threshold = thr;
    out.certificate = std::move(c);
    return true;
  };

  bool found = false;
  for (int m = m0; m <= p.M - 2 && !found; ++m) {
    found = try_pair(m, SlabPair::left, left[m], primed(t_left, left, m), left[m + 1]) ||
            try_pair(m, SlabPair::right, right[m], primed(t_right, right, m), right[m + 1]);
  }
  if (!found)
    found = try_pair(p.M - 1, SlabPair::spanning, left[p.M - 1], primed(t_left, left, p.M - 1), right[p.M - 1]);

  out.direct_time = point_time(field, origin, end, cyl, p.budget);
  if (!found && above(out.direct_time, out.bound)) {
    std::string where;
    for (int m = m0; m <= p.M - 1; ++m) {
      const double need = slab_from_fraction(p, m);
      if (static_cast<double>(primed(t_left, left, m).size()) < need * static_cast<double>(left[m].size()))
        where += " left m=" + std::to_string(m);
      if (static_cast<double>(primed(t_right, right, m).size()) < need * static_cast<double>(right[m].size()))
        where += " right m=" + std::to_string(m);
    }
    throw SlabChainBroken("slab bound exceeded but the reachable-face chain breaks at" + where);
  }
  return out;
}

struct SlabVerification {
  bool rechecked = false;
  bool faces_match = false;
  bool scale_admissible = false;
  bool from_size_ok = false;
  bool covered_matches = false;
  bool to_size_ok = false;
  std::size_t recount = 0;
};

// Independent re-check: faces re-enumerated, every T(A, y) recomputed by
// its own multi-source query.
template <EdgeWeights F>
SlabVerification verify_slab_certificate(const F& field, const SlabParams<F::dimension>& p,
                                         const SlabCertificate<F::dimension>& c) {
  constexpr std::size_t D = F::dimension;
  SlabVerification v;
  const bool from_right = c.pair == SlabPair::right;
  const bool to_right = c.pair != SlabPair::left;
  const int to_m = c.pair == SlabPair::spanning ? c.m : c.m + 1;
  v.faces_match = enumerate_face(slab_face_spec(p, c.m, from_right), p.face_cap) == c.from_face &&
                  enumerate_face(slab_face_spec(p, to_m, to_right), p.face_cap) == c.to_face;
  v.scale_admissible = c.m >= 1 && c.m <= p.M - 1 && c.m >= slab_first_scale(p) &&
                       (c.pair == SlabPair::spanning) == (c.m == p.M - 1);
  std::set<std::size_t> uniq(c.A.begin(), c.A.end());
  const bool indices_ok = uniq.size() == c.A.size() && (c.A.empty() || *uniq.rbegin() < c.from_face.size());
  v.from_size_ok = indices_ok && static_cast<double>(c.A.size()) >=
                                     slab_from_fraction(p, c.m) * static_cast<double>(c.from_face.size());
  const double thr = slab_delta(p, c.m) * p.mu_ref + std::pow(static_cast<double>(p.N), p.a) / (2.0 * p.M);
  std::vector<LatticePoint<D>> src;
  if (indices_ok)
    for (std::size_t j : c.A) src.push_back(c.from_face[j]);
  const Region<D> cyl = slab_cylinder(p);
  for (const auto& y : c.to_face) {
    if (src.empty()) break;
    QuerySpec<D> q{cyl, src, TargetSet<D>::point(y), p.budget};
    try {
      v.recount += at_most(passage_time(field, q).time, thr);
    } catch (const DisconnectedError&) {
    }
  }
  v.covered_matches = v.recount == c.covered;
  v.to_size_ok = static_cast<double>(v.recount) <= slab_to_fraction(p, c.m) * static_cast<double>(c.to_face.size());
  v.rechecked = v.faces_match && v.scale_admissible && v.from_size_ok && v.covered_matches && v.to_size_ok;
  return v;
}

// ---------------------------------------------------------------------------
// Bad vertices

template <std::size_t D>
struct BadParams {
  double b = 0.5;
  double K = 8;
  RealPoint<D> v = unit_vector<D>(0);
  Frame<D> frame = standard_frame<D>();
  double chi_bar_eps = 0.4;  // the constant in the y' face radius K^{(chi_bar_eps+1)/2}
  double mu_ref = 0;
  std::size_t cap = kDefaultFaceCap;
  std::optional<std::uint64_t> budget;
};

template <std::size_t D>
struct BadWitness {
  RealPoint<D> z{};
  double b = 0, K = 0;
  LatticePoint<D> y{}, y_prime{};
  Time restricted_time;  // infinite when y' is unreachable inside the cylinder
  double threshold = 0;  // K mu_ref + 2 K^b
};

template <std::size_t D>
Cylinder<D> bad_inner_cylinder(const RealPoint<D>& z, const BadParams<D>& p) {
  Cylinder<D> c;
  c.base = z;
  c.frame = p.frame;
  c.axis = p.v;
  c.lo = -p.K;
  c.hi = 2 * p.K;
  c.height = std::pow(p.K, (p.b + 1) / 2);
  return c;
}

template <std::size_t D>
Cylinder<D> bad_outer_cylinder(const RealPoint<D>& z, const BadParams<D>& p) {
  Cylinder<D> c = bad_inner_cylinder(z, p);
  c.lo = -4 * p.K;
  c.hi = 4 * p.K;
  c.height = 4 * std::pow(p.K, (p.b + 1) / 2);
  return c;
}

template <std::size_t D>
FaceSpec<D> bad_target_face(const LatticePoint<D>& y, const BadParams<D>& p) {
  FaceSpec<D> f;
  f.frame = p.frame;
  f.axis = p.v;
  f.axial = p.K;
  f.radius = std::pow(p.K, (p.chi_bar_eps + 1) / 2);
  f.offset = to_real(y);
  return f;
}

template <std::size_t D>
void check_bad_params(const BadParams<D>& p) {
  if (!(p.K >= 1)) throw std::invalid_argument("bad vertex: K must be at least 1");
  if (!(p.b > 0 && p.b <= 1)) throw std::invalid_argument("bad vertex: b must lie in (0,1]");
  if (!(p.chi_bar_eps > 0 && p.chi_bar_eps <= 1)) throw std::invalid_argument("bad vertex: chi_bar_eps must lie in (0,1]");
  if (!(p.mu_ref >= 0) || !std::isfinite(p.mu_ref)) throw std::invalid_argument("bad vertex: mu_ref must be finite, >= 0");
}

// First (y, y') in lexicographic order with T_outer(y, y') >= K mu + 2 K^b.
template <EdgeWeights F>
std::optional<BadWitness<F::dimension>> is_bad_vertex(const F& field, const RealPoint<F::dimension>& z,
                                                      const BadParams<F::dimension>& p) {
  constexpr std::size_t D = F::dimension;
  check_bad_params(p);
  const Region<D> inner = bad_inner_cylinder(z, p);
  const Region<D> outer = bad_outer_cylinder(z, p);
  const double thr = p.K * p.mu_ref + 2 * std::pow(p.K, p.b);
  for (const auto& y : detail::lattice_points_in(inner, p.cap)) {
    const auto targets = enumerate_face(bad_target_face(y, p), p.cap);
    const auto t = times_to_targets(field, outer, {y}, targets, p.budget);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const Time tj = t[j] ? *t[j] : Time::infinity();
      if (tj.is_infinite() || at_least(tj, thr)) return BadWitness<D>{z, p.b, p.K, y, targets[j], tj, thr};
    }
  }
  return std::nullopt;
}

template <EdgeWeights F>
bool verify_bad_witness(const F& field, const BadParams<F::dimension>& p, const BadWitness<F::dimension>& w) {
  constexpr std::size_t D = F::dimension;
  if (!region_contains<D>(bad_inner_cylinder(w.z, p), w.y)) return false;
  const auto face = enumerate_face(bad_target_face(w.y, p), p.cap);
  if (!std::binary_search(face.begin(), face.end(), w.y_prime)) return false;
  const double thr = p.K * p.mu_ref + 2 * std::pow(p.K, p.b);
  Time t;
  try {
    t = point_time(field, w.y, w.y_prime, bad_outer_cylinder(w.z, p), p.budget);
  } catch (const DisconnectedError&) {
    t = Time::infinity();
  }
  return t == w.restricted_time && (t.is_infinite() || at_least(t, thr));
}

// Grid Z_{N,m}(b): axial multiples of K, transverse multiples of K^{(1+b)/2}.
template <std::size_t D>
struct BadGridParams {
  std::int64_t N = 64;
  int M = 2;
  int m = 1;
  double a = 0.8;
  double eps = 0;  // transverse radius N^{a/2 + m/(2M) - eps^2}
  BadParams<D> bad;
  bool decimate = false;
  std::size_t cap = kDefaultFaceCap;
  unsigned workers = 1;
};

template <std::size_t D>
struct GridPoint {
  std::array<std::int64_t, D> index{};  // axial multiple of K, then transverse multiples
  RealPoint<D> z{};
};

template <std::size_t D>
std::vector<GridPoint<D>> bad_grid(const BadGridParams<D>& g) {
  if (g.M < 2 || g.m < 0 || g.m > g.M - 1) throw std::invalid_argument("bad grid: need 0 <= m <= M-1, M >= 2");
  const double N = static_cast<double>(g.N);
  const double M = g.M;
  const double K = g.bad.K;
  const double s = std::pow(K, (1 + g.bad.b) / 2);
  const double r = std::pow(N, g.a / 2 + g.m / (2 * M) - g.eps * g.eps);
  std::set<std::int64_t> ks;
  auto add_range = [&](double lo, double hi) {
    for (auto k = static_cast<std::int64_t>(std::ceil(detail::snap_integer(lo / K)));
         static_cast<double>(k) <= detail::snap_integer(hi / K); ++k)
      ks.insert(k);
  };
  if (g.m <= g.M - 2) {
    add_range(std::pow(N, g.m / M), std::pow(N, (g.m + 1) / M));
    add_range(N - std::pow(N, (g.m + 1) / M), N - std::pow(N, g.m / M));
  } else {
    add_range(std::pow(N, (g.M - 1) / M), N - std::pow(N, (g.M - 1) / M));
  }
  const auto tmax = static_cast<std::int64_t>(std::floor(detail::snap_integer(r / s)));
  const double per_axis = static_cast<double>(2 * tmax + 1);
  if (static_cast<double>(ks.size()) * std::pow(per_axis, static_cast<double>(D - 1)) > static_cast<double>(g.cap))
    throw FaceTooLarge("bad grid cardinality exceeds cap");
  std::vector<GridPoint<D>> out;
  for (std::int64_t k1 : ks) {
    std::array<std::int64_t, D> idx{};
    idx[0] = k1;
    for (std::size_t i = 1; i < D; ++i) idx[i] = -tmax;
    while (true) {
      GridPoint<D> gp;
      gp.index = idx;
      gp.z = axpy(static_cast<double>(k1) * K, g.bad.v, RealPoint<D>{});
      for (std::size_t i = 1; i < D; ++i) gp.z = axpy(static_cast<double>(idx[i]) * s, g.bad.frame.basis[i], gp.z);
      out.push_back(gp);
      std::size_t i = D - 1;
      while (i >= 1) {
        if (idx[i] < tmax) {
          ++idx[i];
          break;
        }
        idx[i] = -tmax;
        --i;
      }
      if (i == 0) break;
    }
  }
  return out;
}

// Residue class (index mod 8 per coordinate) used by the 8^d split.
template <std::size_t D>
std::size_t decimation_class(const std::array<std::int64_t, D>& idx) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < D; ++i) c = c * 8 + static_cast<std::size_t>(((idx[i] % 8) + 8) % 8);
  return c;
}

template <std::size_t D>
struct BadScan {
  std::size_t points = 0;
  std::size_t count = 0;
  std::vector<BadWitness<D>> witnesses;
  std::vector<std::size_t> witness_class;
  std::vector<std::size_t> class_counts;  // 8^d entries when decimated
};

template <EdgeWeights F>
BadScan<F::dimension> scan_bad_vertices(const F& field, const BadGridParams<F::dimension>& g) {
  constexpr std::size_t D = F::dimension;
  check_bad_params(g.bad);
  const auto grid = bad_grid(g);
  std::vector<std::optional<BadWitness<D>>> found(grid.size());
  parallel_for(grid.size(), g.workers, [&](std::size_t i) { found[i] = is_bad_vertex(field, grid[i].z, g.bad); });
  BadScan<D> s;
  s.points = grid.size();
  if (g.decimate) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < D; ++i) n *= 8;
    s.class_counts.assign(n, 0);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!found[i]) continue;
    ++s.count;
    s.witnesses.push_back(*found[i]);
    const std::size_t c = decimation_class<D>(grid[i].index);
    s.witness_class.push_back(c);
    if (g.decimate) ++s.class_counts[c];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Face deficits

template <std::size_t D>
struct FaceProfileParams {
  std::int64_t N = 64;
  double K = 16;
  std::int64_t J = 4;
  Frame<D> frame = standard_frame<D>();
  double mu_ref = 0;
  GridSpec b_grid{0.4, 1.0, 10};
  std::optional<double> window;  // half width of the window; N^2 by default
  std::optional<std::uint64_t> budget;
  unsigned workers = 1;
};

template <std::size_t D>
struct FaceDeficitProfile {
  std::int64_t N = 0;
  double K = 0;
  std::int64_t J = 0;
  std::vector<Time> times;  // T(F_i, F_{i+1}), i = 0..J-1
  std::vector<Rational> b_values;
  std::vector<double> thresholds;  // K mu_ref - K^b
  std::vector<std::size_t> deficit_counts;
};

template <std::size_t D>
Box<D> centred_window(double half) {
  Box<D> b;
  for (std::size_t i = 0; i < D; ++i) {
    b.lo[i] = -half;
    b.hi[i] = half;
  }
  return b;
}

template <EdgeWeights F>
FaceDeficitProfile<F::dimension> face_deficit_profile(const F& field, const FaceProfileParams<F::dimension>& p) {
  constexpr std::size_t D = F::dimension;
  if (p.J < 1) throw std::invalid_argument("face profile: J must be at least 1");
  if (!(p.K >= 1)) throw std::invalid_argument("face profile: K must be at least 1");
  const double N = static_cast<double>(p.N);
  const Region<D> window = centred_window<D>(p.window ? *p.window : N * N);
  FaceDeficitProfile<D> r;
  r.N = p.N;
  r.K = p.K;
  r.J = p.J;
  r.times.resize(static_cast<std::size_t>(p.J));
  parallel_for(r.times.size(), p.workers, [&](std::size_t i) {
    r.times[i] = face_to_face_time(field, p.frame, static_cast<std::int64_t>(i), p.K, window, p.budget).time;
  });
  r.b_values = grid_points(p.b_grid);
  for (const auto& b : r.b_values) {
    const double thr = p.K * p.mu_ref - std::pow(p.K, b.value());
    std::size_t c = 0;
    for (const Time& t : r.times) c += below(t, thr);
    r.thresholds.push_back(thr);
    r.deficit_counts.push_back(c);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Block traces

template <std::size_t D>
struct BlockTrace {
  double K = 1;
  std::size_t path_vertices = 0;
  std::vector<LatticePoint<D>> blocks;  // sorted
  bool connected = false;
  bool volume_ok = false;  // K |blocks| <= 3^d |path|
};

template <std::size_t D>
bool blocks_connected(const std::vector<LatticePoint<D>>& sorted_blocks) {
  if (sorted_blocks.empty()) return true;
  std::vector<char> seen(sorted_blocks.size(), 0);
  std::deque<std::size_t> q{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const auto x = sorted_blocks[q.front()];
    q.pop_front();
    for (std::size_t i = 0; i < D; ++i) {
      for (int s : {-1, 1}) {
        auto y = x;
        y[i] += s;
        auto it = std::lower_bound(sorted_blocks.begin(), sorted_blocks.end(), y);
        if (it == sorted_blocks.end() || *it != y) continue;
        const auto j = static_cast<std::size_t>(it - sorted_blocks.begin());
        if (!seen[j]) {
          seen[j] = 1;
          ++reached;
          q.push_back(j);
        }
      }
    }
  }
  return reached == sorted_blocks.size();
}

// Blocks Kx + [0,K)^d met by the path.
template <std::size_t D>
BlockTrace<D> geodesic_block_trace(const Path<D>& path, double K) {
  if (path.empty()) throw std::invalid_argument("block trace: empty path");
  if (!(K >= 1)) throw std::invalid_argument("block trace: K must be at least 1");
  BlockTrace<D> t;
  t.K = K;
  t.path_vertices = path.size();
  for (const auto& y : path) {
    LatticePoint<D> b;
    for (std::size_t i = 0; i < D; ++i) b[i] = static_cast<std::int64_t>(std::floor(static_cast<double>(y[i]) / K));
    t.blocks.push_back(b);
  }
  std::sort(t.blocks.begin(), t.blocks.end());
  t.blocks.erase(std::unique(t.blocks.begin(), t.blocks.end()), t.blocks.end());
  t.connected = blocks_connected(t.blocks);
  t.volume_ok = K * static_cast<double>(t.blocks.size()) <= std::pow(3.0, static_cast<double>(D)) *
                                                                 static_cast<double>(path.size());
  return t;
}

// ---------------------------------------------------------------------------
// Dark vertices

template <std::size_t D>
struct DarkParams {
  double b = 0.5;
  double K_hat = 4;
  double A = 9;  // must exceed 4d
  Frame<D> frame = standard_frame<D>();
  double mu_ref = 0;
  std::optional<std::uint64_t> budget;
};

enum class DarkKind { cheap_crossing, escape };

inline const char* to_string(DarkKind k) { return k == DarkKind::cheap_crossing ? "cheap_crossing" : "escape"; }

template <std::size_t D>
struct DarkWitness {
  LatticePoint<D> x{}, y{};
  DarkKind kind = DarkKind::cheap_crossing;
  Time time;          // T(y, y + K H_u), restricted to the box when cheap
  double threshold = 0;  // K mu_ref - 2 K^b
  Path<D> geodesic;      // the escaping geodesic
};

template <std::size_t D>
void check_dark_params(const DarkParams<D>& p) {
  if (!(p.A > 4.0 * static_cast<double>(D))) throw std::invalid_argument("dark vertex: A must exceed 4d");
  if (!(p.K_hat >= 1)) throw std::invalid_argument("dark vertex: K_hat must be at least 1");
  if (!(p.b > 0 && p.b <= 1)) throw std::invalid_argument("dark vertex: b must lie in (0,1]");
  if (!std::isfinite(p.mu_ref)) throw std::invalid_argument("dark vertex: mu_ref must be finite");
}

template <std::size_t D>
Box<D> dark_box(const LatticePoint<D>& x, const DarkParams<D>& p) {
  Box<D> b;
  for (std::size_t i = 0; i < D; ++i) {
    b.lo[i] = static_cast<double>(x[i]) - p.A * p.K_hat;
    b.hi[i] = static_cast<double>(x[i]) + p.A * p.K_hat;
  }
  return b;
}

template <std::size_t D>
PlaneSet<D> dark_target(const LatticePoint<D>& y, const DarkParams<D>& p) {
  return tangent_plane_through(p.frame, axpy(p.K_hat, p.frame.u, to_real(y)));
}

// Only the tie-broken geodesic is tested for escape.
template <EdgeWeights F>
std::optional<DarkWitness<F::dimension>> is_dark_vertex(const F& field, const LatticePoint<F::dimension>& x,
                                                        const DarkParams<F::dimension>& p) {
  constexpr std::size_t D = F::dimension;
  check_dark_params(p);
  const Box<D> box = dark_box(x, p);
  const double thr = p.K_hat * p.mu_ref - 2 * std::pow(p.K_hat, p.b);
  const auto r = static_cast<std::int64_t>(std::floor(2 * p.K_hat));
  LatticePoint<D> off;
  off.fill(-r);
  while (true) {
    LatticePoint<D> y;
    for (std::size_t i = 0; i < D; ++i) y[i] = x[i] + off[i];
    QuerySpec<D> q{Everything{}, {y}, TargetSet<D>::plane(dark_target(y, p)), p.budget};
    auto res = passage_time(field, q);
    bool escaped = false;
    for (const auto& v : res.path) escaped = escaped || !detail::inside_box(box, v);
    // A confined geodesic realises the box-restricted time as well.
    if (escaped) return DarkWitness<D>{x, y, DarkKind::escape, res.time, thr, std::move(res.path)};
    if (below(res.time, thr)) return DarkWitness<D>{x, y, DarkKind::cheap_crossing, res.time, thr, {}};
    std::size_t i = D;
    while (i-- > 0) {
      if (off[i] < r) {
        ++off[i];
        break;
      }
      off[i] = -r;
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  return std::nullopt;
}

template <EdgeWeights F>
bool verify_dark_witness(const F& field, const DarkParams<F::dimension>& p, const DarkWitness<F::dimension>& w) {
  constexpr std::size_t D = F::dimension;
  for (std::size_t i = 0; i < D; ++i)
    if (std::fabs(static_cast<double>(w.y[i] - w.x[i])) > 2 * p.K_hat) return false;
  const auto plane = dark_target(w.y, p);
  if (w.kind == DarkKind::cheap_crossing) {
    QuerySpec<D> q{dark_box(w.x, p), {w.y}, TargetSet<D>::plane(plane), p.budget};
    const Time t = passage_time(field, q).time;
    return t == w.time && below(t, w.threshold);
  }
  if (w.geodesic.empty() || w.geodesic.front() != w.y || !plane.contains(w.geodesic.back())) return false;
  for (std::size_t i = 1; i < w.geodesic.size(); ++i)
    if (!adjacent(w.geodesic[i - 1], w.geodesic[i])) return false;
  QuerySpec<D> q{Everything{}, {w.y}, TargetSet<D>::plane(plane), p.budget};
  const Time t = passage_time(field, q).time;
  bool escaped = false;
  for (const auto& v : w.geodesic) escaped = escaped || !detail::inside_box(dark_box(w.x, p), v);
  return escaped && path_time(field, w.geodesic) == t && t == w.time;
}

template <std::size_t D>
struct DarkScan {
  BlockTrace<D> trace;
  std::vector<LatticePoint<D>> probed;  // K_hat * block, floored
  std::size_t count = 0;
  std::vector<DarkWitness<D>> witnesses;
};

// Probes K_hat * x for every block x met by the geodesic 0 -> N u.
template <EdgeWeights F>
DarkScan<F::dimension> scan_dark_blocks(const F& field, std::int64_t N, const DarkParams<F::dimension>& p,
                                        unsigned workers = 1) {
  constexpr std::size_t D = F::dimension;
  check_dark_params(p);
  const auto end = scaled_point(p.frame.u, static_cast<double>(N));
  DarkScan<D> s;
  s.trace = geodesic_block_trace(geodesic(field, point_query<D>(LatticePoint<D>{}, end, Everything{}, p.budget)), p.K_hat);
  for (const auto& b : s.trace.blocks) {
    RealPoint<D> x{};
    for (std::size_t i = 0; i < D; ++i) x[i] = p.K_hat * static_cast<double>(b[i]);
    s.probed.push_back(floor_point(x));
  }
  std::vector<std::optional<DarkWitness<D>>> found(s.probed.size());
  parallel_for(found.size(), workers, [&](std::size_t i) { found[i] = is_dark_vertex(field, s.probed[i], p); });
  for (auto& w : found) {
    if (!w) continue;
    ++s.count;
    s.witnesses.push_back(std::move(*w));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Upper-tail block chain along e_1

struct BlockEventParams {
  std::int64_t N = 512;
  double zeta = 0.05;
  double chi_hat = 1.0 / 3;
  double eps = 0.1;
  double A = 2;
  double mu_ref = 0;
  std::size_t cap = kDefaultFaceCap;
  std::optional<std::uint64_t> budget;
  unsigned workers = 1;
};

template <std::size_t D>
struct BlockReport {
  std::int64_t N = 0;
  double zeta = 0;
  std::int64_t K_tilde = 0;
  double half_width = 0;       // A sqrt(zeta) N
  double event_threshold = 0;  // K mu_ref + K^{chi_hat (1 - eps)}
  std::vector<Time> block_times;  // T(L_{i-1}, {iK} x Z^{d-1})
  std::vector<bool> events;
  bool all_events = false;
  bool confined = false;
  Time implied_lower_bound;  // sum of block_times
  Time actual_T;
  Path<D> geodesic;
  bool hypotheses = false;       // all events and confined
  bool chain_holds = false;      // actual_T >= implied_lower_bound
  bool tail_bound_holds = false; // implied_lower_bound >= blocks * event_threshold
  bool violation() const { return hypotheses && (!chain_holds || !tail_bound_holds); }
};

inline std::int64_t upper_block_size(double zeta, double chi_hat) {
  if (!(zeta > 0) || !(chi_hat >= 0 && chi_hat < 1)) throw std::invalid_argument("block size: need zeta > 0, chi in [0,1)");
  return static_cast<std::int64_t>(std::floor(detail::snap_integer(std::pow(zeta, -1 / (1 - chi_hat)))));
}

// {iK} x ([-h, h] ∩ Z)^{d-1}
template <std::size_t D>
std::vector<LatticePoint<D>> transverse_face(std::int64_t axial, double h, std::size_t cap) {
  const auto r = static_cast<std::int64_t>(std::floor(detail::snap_integer(h)));
  if (r < 0) return {};
  if (std::pow(static_cast<double>(2 * r + 1), static_cast<double>(D - 1)) > static_cast<double>(cap))
    throw FaceTooLarge("block face exceeds cap");
  std::vector<LatticePoint<D>> out;
  LatticePoint<D> x;
  x.fill(-r);
  x[0] = axial;
  while (true) {
    out.push_back(x);
    std::size_t i = D - 1;
    while (i >= 1) {
      if (x[i] < r) {
        ++x[i];
        break;
      }
      x[i] = -r;
      --i;
    }
    if (i == 0) break;
  }
  return out;
}

template <EdgeWeights F>
BlockReport<F::dimension> block_event_check(const F& field, const BlockEventParams& p) {
  constexpr std::size_t D = F::dimension;
  const std::int64_t K = upper_block_size(p.zeta, p.chi_hat);
  if (K < 2) throw std::invalid_argument("block events: zeta too large, K < 2");
  if (p.N < 2 * K) throw std::invalid_argument("block events: need N >= 2K");
  if (!(p.A > 0)) throw std::invalid_argument("block events: A must be positive");
  BlockReport<D> r;
  r.N = p.N;
  r.zeta = p.zeta;
  r.K_tilde = K;
  r.half_width = p.A * std::sqrt(p.zeta) * static_cast<double>(p.N);
  r.event_threshold = static_cast<double>(K) * p.mu_ref + std::pow(static_cast<double>(K), p.chi_hat * (1 - p.eps));
  const std::int64_t blocks = (p.N + K - 1) / K - 1;
  r.block_times.resize(static_cast<std::size_t>(blocks));
  parallel_for(r.block_times.size(), p.workers, [&](std::size_t j) {
    const auto i = static_cast<std::int64_t>(j) + 1;
    PlaneSet<D> plane{unit_vector<D>(0), static_cast<double>(i * K)};
    QuerySpec<D> q{Everything{}, transverse_face<D>((i - 1) * K, r.half_width, p.cap), TargetSet<D>::plane(plane),
                   p.budget};
    r.block_times[j] = passage_time(field, q).time;
  });
  r.all_events = true;
  for (const Time& t : r.block_times) {
    r.events.push_back(at_least(t, r.event_threshold));
    r.all_events = r.all_events && r.events.back();
    r.implied_lower_bound += t;
  }
  LatticePoint<D> end{};
  end[0] = p.N;
  auto res = passage_time(field, point_query<D>(LatticePoint<D>{}, end, Everything{}, p.budget));
  r.actual_T = res.time;
  r.geodesic = std::move(res.path);
  r.confined = true;
  for (const auto& v : r.geodesic)
    for (std::size_t i = 1; i < D; ++i) r.confined = r.confined && std::fabs(static_cast<double>(v[i])) <= r.half_width;
  r.hypotheses = r.all_events && r.confined;
  r.chain_holds = r.actual_T >= r.implied_lower_bound;
  r.tail_bound_holds = at_least(r.implied_lower_bound, static_cast<double>(blocks) * r.event_threshold);
  return r;
}

// ---------------------------------------------------------------------------
// Lower-tail block chain

template <std::size_t D>
struct LowerChainParams {
  std::int64_t N = 64;
  Magnitude magnitude{Magnitude::Kind::exponent, 0.8};
  double chi_lower = 1.0 / 3;
  double mu_ref = 0;
  RealPoint<D> u = unit_vector<D>(0);
  Region<D> region = Everything{};
  std::optional<std::uint64_t> budget;
};

template <std::size_t D>
struct LowerChainReport {
  std::int64_t N = 0;
  std::int64_t J = 0;
  double K = 0;  // N / J
  double event_threshold = 0;  // K mu_ref - K^chi
  std::vector<LatticePoint<D>> points;  // floor(i K u), i = 0..J
  std::vector<Time> block_times;
  std::vector<bool> events;
  bool conjunction = false;
  Time block_sum;
  Time actual_T;
  bool triangle_ok = false;  // actual_T <= block_sum
  double chain_deviation = 0;   // K^chi J
  double target_deviation = 0;  // N^a or zeta N
  bool deviation_covers = false;
  bool lower_tail_event = false;  // actual_T < N mu_ref - target_deviation
  bool violation() const { return !triangle_ok || (conjunction && deviation_covers && !lower_tail_event); }
};

// J = ceil(N^{(a-chi)/(1-chi)}) or ceil(zeta^{1/(1-chi)} N).
inline std::int64_t lower_block_count(std::int64_t N, const Magnitude& m, double chi) {
  if (!(chi >= 0 && chi < 1)) throw std::invalid_argument("lower chain: chi must lie in [0,1)");
  const double n = static_cast<double>(N);
  const double x = m.kind == Magnitude::Kind::exponent ? std::pow(n, (m.value - chi) / (1 - chi))
                                                        : std::pow(m.value, 1 / (1 - chi)) * n;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(detail::snap_integer(x))));
}

template <EdgeWeights F>
LowerChainReport<F::dimension> lower_tail_block_chain(const F& field, const LowerChainParams<F::dimension>& p) {
  constexpr std::size_t D = F::dimension;
  if (p.N < 1) throw std::invalid_argument("lower chain: N must be positive");
  if (!(p.magnitude.value > 0)) throw std::invalid_argument("lower chain: a or zeta must be positive");
  LowerChainReport<D> r;
  r.N = p.N;
  r.J = lower_block_count(p.N, p.magnitude, p.chi_lower);
  const double n = static_cast<double>(p.N);
  r.K = n / static_cast<double>(r.J);
  if (!(r.K >= 1)) throw std::invalid_argument("lower chain: block length N/J < 1");
  r.event_threshold = r.K * p.mu_ref - std::pow(r.K, p.chi_lower);
  for (std::int64_t i = 0; i <= r.J; ++i) {
    const double s = static_cast<double>(i * p.N) / static_cast<double>(r.J);
    r.points.push_back(scaled_point(p.u, s));
  }
  r.conjunction = true;
  for (std::int64_t i = 0; i < r.J; ++i) {
    const Time t = point_time(field, r.points[i], r.points[i + 1], p.region, p.budget);
    r.block_times.push_back(t);
    r.events.push_back(below(t, r.event_threshold));
    r.conjunction = r.conjunction && r.events.back();
    r.block_sum += t;
  }
  r.actual_T = point_time(field, r.points.front(), r.points.back(), p.region, p.budget);
  r.triangle_ok = r.actual_T <= r.block_sum;
  r.chain_deviation = std::pow(n, p.chi_lower) * std::pow(static_cast<double>(r.J), 1 - p.chi_lower);
  r.target_deviation = p.magnitude.deviation(n);
  r.deviation_covers = r.chain_deviation >= r.target_deviation * (1 - 1e-12);
  r.lower_tail_event = below(r.actual_T, n * p.mu_ref - r.target_deviation);
  return r;
}

}  // namespace fpp
