#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lattice.hpp"

namespace fpp {

struct L1Ball {};
struct EuclideanBall {};
template <std::size_t D>
struct EmpiricalShape {
  std::vector<RealPoint<D>> tangents;
};

template <std::size_t D>
using ShapeModel = std::variant<L1Ball, EuclideanBall, EmpiricalShape<D>>;

// basis[0] is the unit normal of H_u (oriented so that basis[0].u > 0);
// basis[1..] span the tangent directions. H_u = {x : basis[0].x = tangent_offset}.
template <std::size_t D>
struct Frame {
  RealPoint<D> u{};
  std::array<RealPoint<D>, D> basis{};
  double tangent_offset = 1.0;
};

template <std::size_t D>
Frame<D> standard_frame() {
  Frame<D> f;
  f.u = unit_vector<D>(0);
  for (std::size_t i = 0; i < D; ++i) f.basis[i] = unit_vector<D>(i);
  f.tangent_offset = 1.0;
  return f;
}

namespace detail {

template <std::size_t D>
RealPoint<D> project_out(RealPoint<D> x, const std::vector<RealPoint<D>>& basis) {
  for (const auto& b : basis) x = axpy(-dot(x, b), b, x);
  return x;
}

// Sign convention for tangent vectors: first nonzero coordinate positive.
template <std::size_t D>
void fix_sign(RealPoint<D>& x) {
  for (std::size_t i = 0; i < D; ++i) {
    if (std::fabs(x[i]) > 1e-14) {
      if (x[i] < 0)
        for (auto& c : x) c = -c;
      return;
    }
  }
}

template <std::size_t D>
RealPoint<D> normalized(RealPoint<D> x) {
  double n = norm(x);
  for (auto& c : x) c /= n;
  return x;
}

}  // namespace detail

template <std::size_t D>
Frame<D> make_frame(const RealPoint<D>& u, const ShapeModel<D>& model) {
  if (std::fabs(norm(u) - 1.0) > 1e-9) throw std::invalid_argument("make_frame: u must be a unit vector");
  if (u == unit_vector<D>(0)) return standard_frame<D>();

  RealPoint<D> normal{};
  if (std::holds_alternative<EuclideanBall>(model)) {
    normal = u;
  } else if (std::holds_alternative<L1Ball>(model)) {
    // Supporting hyperplanes of the l1 ball at u have normals in the
    // subdifferential of |.|_1; the sign vector with zeros kept at zero
    // coordinates maximises alignment with u.
    for (std::size_t i = 0; i < D; ++i) normal[i] = u[i] > 0 ? 1.0 : (u[i] < 0 ? -1.0 : 0.0);
    normal = detail::normalized(normal);
  } else {
    const auto& tangents = std::get<EmpiricalShape<D>>(model).tangents;
    std::vector<RealPoint<D>> ortho;
    for (const auto& t : tangents) {
      RealPoint<D> r = detail::project_out(t, ortho);
      if (norm(r) > 1e-9 * std::max(1.0, norm(t))) ortho.push_back(detail::normalized(r));
    }
    if (ortho.size() < D - 1) throw std::invalid_argument("make_frame: tangent data has rank < d-1");
    if (ortho.size() > D - 1) throw std::invalid_argument("make_frame: tangent data spans R^d");
    for (std::size_t i = 0; i < D && norm(normal) < 0.5; ++i) {
      RealPoint<D> r = detail::project_out(unit_vector<D>(i), ortho);
      if (norm(r) > 1e-6) normal = detail::normalized(r);
    }
  }
  if (dot(normal, u) < 0)
    for (auto& c : normal) c = -c;
  if (std::fabs(dot(normal, u)) < 1e-12) throw std::invalid_argument("make_frame: tangent plane contains u");

  Frame<D> f;
  f.u = u;
  f.basis[0] = normal;
  std::vector<RealPoint<D>> done{normal};
  std::size_t k = 1;
  for (std::size_t i = 0; i < D && k < D; ++i) {
    RealPoint<D> r = detail::project_out(unit_vector<D>(i), done);
    if (norm(r) < 1e-9) continue;
    r = detail::normalized(detail::project_out(detail::normalized(r), done));
    detail::fix_sign(r);
    f.basis[k++] = r;
    done.push_back(r);
  }
  f.tangent_offset = dot(normal, u);
  return f;
}

// Cyl_v(I,h) shifted by base.
template <std::size_t D>
struct Cylinder {
  RealPoint<D> base{};
  Frame<D> frame = standard_frame<D>();
  RealPoint<D> axis = unit_vector<D>(0);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double height = 1.0;
};

template <std::size_t D>
void check_cylinder(const Cylinder<D>& c) {
  if (!(c.height > 0)) throw std::invalid_argument("cylinder height must be positive");
  if (c.lo > c.hi) throw std::invalid_argument("cylinder interval has lo > hi");
  if (std::fabs(dot(c.axis, c.frame.basis[0])) < 1e-12 * std::max(1.0, norm(c.axis)))
    throw std::domain_error("cylinder axis lies in the tangent span: singular coordinates");
}

// Coordinates (y1, y2..yd) of x in the cylinder's frame.
template <std::size_t D>
RealPoint<D> cylinder_coords(const Cylinder<D>& c, const RealPoint<D>& x) {
  RealPoint<D> rel{};
  for (std::size_t i = 0; i < D; ++i) rel[i] = x[i] - c.base[i];
  const double denom = dot(c.axis, c.frame.basis[0]);
  if (std::fabs(denom) < 1e-12 * std::max(1.0, norm(c.axis)))
    throw std::domain_error("cylinder axis lies in the tangent span: singular coordinates");
  RealPoint<D> y{};
  y[0] = dot(rel, c.frame.basis[0]) / denom;
  RealPoint<D> rest = axpy(-y[0], c.axis, rel);
  for (std::size_t i = 1; i < D; ++i) y[i] = dot(rest, c.frame.basis[i]);
  return y;
}

struct Everything {};
template <std::size_t D>
struct Box {
  RealPoint<D> lo{}, hi{};
};
// {x : lo <= basis[0].x <= hi}
template <std::size_t D>
struct Slab {
  Frame<D> frame = standard_frame<D>();
  double lo = 0, hi = 0;
};

template <std::size_t D>
using Region = std::variant<Everything, Box<D>, Cylinder<D>, Slab<D>>;

template <std::size_t D>
Box<D> lattice_box(const LatticePoint<D>& lo, const LatticePoint<D>& hi) {
  return Box<D>{to_real(lo), to_real(hi)};
}

template <std::size_t D>
bool region_contains(const Region<D>& r, const RealPoint<D>& x) {
  switch (r.index()) {
    case 0:
      return true;
    case 1: {
      const auto& b = std::get<1>(r);
      for (std::size_t i = 0; i < D; ++i)
        if (x[i] < b.lo[i] || x[i] > b.hi[i]) return false;
      return true;
    }
    case 2: {
      const auto& c = std::get<2>(r);
      RealPoint<D> y = cylinder_coords(c, x);
      if (y[0] < c.lo || y[0] > c.hi) return false;
      for (std::size_t i = 1; i < D; ++i)
        if (std::fabs(y[i]) > c.height) return false;
      return true;
    }
    default: {
      const auto& s = std::get<3>(r);
      double t = dot(x, s.frame.basis[0]);
      return t >= s.lo && t <= s.hi;
    }
  }
}

template <std::size_t D>
bool region_contains(const Region<D>& r, const LatticePoint<D>& x) {
  if (r.index() == 0) return true;
  if (r.index() == 1) {
    const auto& b = std::get<1>(r);
    for (std::size_t i = 0; i < D; ++i) {
      double c = static_cast<double>(x[i]);
      if (c < b.lo[i] || c > b.hi[i]) return false;
    }
    return true;
  }
  return region_contains(r, to_real(x));
}

// Axis-aligned bounding box (closed, real) of a bounded region.
template <std::size_t D>
std::optional<Box<D>> bounding_box(const Region<D>& r) {
  if (r.index() == 1) return std::get<1>(r);
  if (r.index() == 2) {
    const auto& c = std::get<2>(r);
    if (!std::isfinite(c.lo) || !std::isfinite(c.hi)) return std::nullopt;
    Box<D> b;
    for (std::size_t i = 0; i < D; ++i) {
      double lo = c.base[i] + std::min(c.lo * c.axis[i], c.hi * c.axis[i]);
      double hi = c.base[i] + std::max(c.lo * c.axis[i], c.hi * c.axis[i]);
      for (std::size_t j = 1; j < D; ++j) {
        lo -= c.height * std::fabs(c.frame.basis[j][i]);
        hi += c.height * std::fabs(c.frame.basis[j][i]);
      }
      b.lo[i] = lo;
      b.hi[i] = hi;
    }
    return b;
  }
  return std::nullopt;
}

// Exact rational num/den.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational& x, const Rational& y) { return x.num * y.den == y.num * x.den; }
};

struct GridSpec {
  double a = 0, b = 1;
  std::int64_t L = 1;
};

// [[a,b]]_L = [a + 1/L, b - 1/L] ∩ (1/L)Z, ascending.
inline std::vector<Rational> grid_points(const GridSpec& g) {
  if (!(g.a < g.b)) throw std::invalid_argument("grid_points: need a < b");
  if (g.L < 1) throw std::invalid_argument("grid_points: L must be positive");
  const double L = static_cast<double>(g.L);
  // Snap products that are integers up to rounding (0.6*5 = 3.0000000000000004).
  auto snapped = [](double x) {
    double r = std::nearbyint(x);
    return std::fabs(x - r) < 1e-9 ? r : x;
  };
  std::int64_t first = static_cast<std::int64_t>(std::ceil(snapped(g.a * L))) + 1;
  std::int64_t last = static_cast<std::int64_t>(std::floor(snapped(g.b * L))) - 1;
  std::vector<Rational> out;
  for (std::int64_t k = first; k <= last; ++k) out.push_back({k, g.L});
  return out;
}

class FaceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultFaceCap = 10'000'000;

// Face {offset + axial*axis + sum_{i>=2} y_i basis[i] : |y_i| <= radius}.
// spacing > 0 restricts y_i to spacing*Z; no spacing means every floor image.
template <std::size_t D>
struct FaceSpec {
  Frame<D> frame = standard_frame<D>();
  RealPoint<D> axis = unit_vector<D>(0);
  double axial = 0;
  double radius = 0;
  std::optional<double> spacing;
  RealPoint<D> offset{};
};

namespace detail {

template <std::size_t D>
RealPoint<D> face_centre(const FaceSpec<D>& f) {
  return axpy(f.axial, f.axis, f.offset);
}

// Index of the standard axis when v = +-e_j exactly, else -1.
template <std::size_t D>
int axis_index(const RealPoint<D>& v) {
  int j = -1;
  for (std::size_t i = 0; i < D; ++i) {
    if (v[i] == 0) continue;
    if (std::fabs(v[i]) != 1.0 || j >= 0) return -1;
    j = static_cast<int>(i);
  }
  return j;
}

template <std::size_t D>
void sort_unique(std::vector<LatticePoint<D>>& pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
}

template <std::size_t D>
std::vector<LatticePoint<D>> face_axis_aligned(const FaceSpec<D>& f, std::size_t cap) {
  const RealPoint<D> c = face_centre(f);
  std::array<std::int64_t, D> lo{}, hi{};
  std::array<bool, D> free{};
  for (std::size_t i = 1; i < D; ++i) free[axis_index(f.frame.basis[i])] = true;
  double count = 1;
  for (std::size_t j = 0; j < D; ++j) {
    if (free[j]) {
      lo[j] = static_cast<std::int64_t>(std::floor(c[j] - f.radius));
      hi[j] = static_cast<std::int64_t>(std::floor(c[j] + f.radius));
    } else {
      lo[j] = hi[j] = static_cast<std::int64_t>(std::floor(c[j]));
    }
    count *= static_cast<double>(hi[j] - lo[j] + 1);
  }
  if (count > static_cast<double>(cap)) throw FaceTooLarge("face cardinality exceeds cap");
  std::vector<LatticePoint<D>> out;
  out.reserve(static_cast<std::size_t>(count));
  LatticePoint<D> x = lo;
  while (true) {
    out.push_back(x);
    std::size_t j = D;
    while (j > 0) {
      --j;
      if (x[j] < hi[j]) {
        ++x[j];
        break;
      }
      x[j] = lo[j];
      if (j == 0) return out;
    }
  }
}

// d = 2: every cell met by the segment c + t*w, |t| <= r.
template <std::size_t D>
std::vector<LatticePoint<D>> face_segment(const FaceSpec<D>& f, std::size_t cap) {
  static_assert(D == 2);
  const RealPoint<D> c = face_centre(f);
  const RealPoint<D> w = f.frame.basis[1];
  const double r = f.radius;
  struct Break {
    double t;
    int coord;
    std::int64_t k;
  };
  std::vector<Break> br;
  double est = 2;
  for (int j = 0; j < 2; ++j) {
    if (w[j] == 0) continue;
    double a = c[j] - r * std::fabs(w[j]), b = c[j] + r * std::fabs(w[j]);
    est += b - a + 2;
  }
  if (est > static_cast<double>(cap)) throw FaceTooLarge("face cardinality exceeds cap");
  for (int j = 0; j < 2; ++j) {
    if (w[j] == 0) continue;
    double a = c[j] - r * std::fabs(w[j]), b = c[j] + r * std::fabs(w[j]);
    for (auto k = static_cast<std::int64_t>(std::ceil(a)); k <= static_cast<std::int64_t>(std::floor(b)); ++k) {
      double t = (static_cast<double>(k) - c[j]) / w[j];
      if (t >= -r && t <= r) br.push_back({t, j, k});
    }
  }
  std::sort(br.begin(), br.end(), [](const Break& x, const Break& y) { return x.t < y.t; });
  std::vector<double> ts{-r};
  for (const auto& b : br) ts.push_back(b.t);
  ts.push_back(r);

  auto point_at = [&](double t) {
    RealPoint<D> p = axpy(t, w, c);
    return p;
  };
  std::vector<LatticePoint<D>> out;
  // Endpoints and breakpoints, with the crossing coordinate snapped to its integer.
  out.push_back(floor_point(point_at(-r)));
  out.push_back(floor_point(point_at(r)));
  for (std::size_t i = 0; i < br.size(); ++i) {
    RealPoint<D> p = point_at(br[i].t);
    p[br[i].coord] = static_cast<double>(br[i].k);
    for (std::size_t j = i + 1; j < br.size() && br[j].t == br[i].t; ++j)
      p[br[j].coord] = static_cast<double>(br[j].k);
    for (std::size_t j = i; j-- > 0 && br[j].t == br[i].t;) p[br[j].coord] = static_cast<double>(br[j].k);
    out.push_back(floor_point(p));
  }
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i + 1] > ts[i]) out.push_back(floor_point(point_at(0.5 * (ts[i] + ts[i + 1]))));
  }
  sort_unique(out);
  return out;
}

}  // namespace detail

template <std::size_t D>
std::vector<LatticePoint<D>> enumerate_face(const FaceSpec<D>& f, std::size_t cap = kDefaultFaceCap) {
  if (f.radius < 0 || !std::isfinite(f.radius)) throw std::invalid_argument("enumerate_face: bad radius");
  if (f.spacing) {
    const double s = *f.spacing;
    if (!(s > 0)) throw std::invalid_argument("enumerate_face: spacing must be positive");
    const auto kmax = static_cast<std::int64_t>(std::floor(f.radius / s));
    const double per_axis = static_cast<double>(2 * kmax + 1);
    if (std::pow(per_axis, static_cast<double>(D - 1)) > static_cast<double>(cap))
      throw FaceTooLarge("face cardinality exceeds cap");
    const RealPoint<D> c = detail::face_centre(f);
    std::vector<LatticePoint<D>> out;
    std::array<std::int64_t, D> k{};
    for (std::size_t i = 1; i < D; ++i) k[i] = -kmax;
    while (true) {
      RealPoint<D> p = c;
      for (std::size_t i = 1; i < D; ++i) p = axpy(static_cast<double>(k[i]) * s, f.frame.basis[i], p);
      out.push_back(floor_point(p));
      std::size_t i = D - 1;
      while (i >= 1) {
        if (k[i] < kmax) {
          ++k[i];
          break;
        }
        k[i] = -kmax;
        --i;
      }
      if (i == 0) break;
    }
    detail::sort_unique(out);
    return out;
  }
  bool aligned = true;
  for (std::size_t i = 1; i < D; ++i) aligned = aligned && detail::axis_index(f.frame.basis[i]) >= 0;
  if (aligned) return detail::face_axis_aligned(f, cap);
  if constexpr (D == 2) {
    return detail::face_segment(f, cap);
  } else {
    throw std::domain_error("continuum floor image of a tilted face is only supported in d = 2; pass a spacing");
  }
}

// Floor image of the hyperplane {x : normal.x = level}: lattice points whose
// unit cell z + [0,1)^d meets it.
template <std::size_t D>
struct PlaneSet {
  RealPoint<D> normal{};
  double level = 0;

  bool contains(const LatticePoint<D>& z) const {
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < D; ++i) {
      double c = static_cast<double>(z[i]) * normal[i];
      lo += c + std::min(0.0, normal[i]);
      hi += c + std::max(0.0, normal[i]);
    }
    // Half-open cell: the far corner is excluded, so for an axis normal this
    // reduces to z_j = floor(level).
    if (level < lo) return false;
    return level < hi;
  }
};

// Plane through `point` parallel to the frame's tangent span.
template <std::size_t D>
PlaneSet<D> tangent_plane_through(const Frame<D>& f, const RealPoint<D>& point) {
  return PlaneSet<D>{f.basis[0], dot(f.basis[0], point)};
}

}  // namespace fpp
