#include <gtest/gtest.h>

#include <map>
#include <random>

#include "fpp/oracle.hpp"
#include "fpp/passage.hpp"

using namespace fpp;

namespace {

// Plain Bellman-Ford over the closed box, independent of the search code.
template <std::size_t D, class F>
Time bellman_ford(const F& f, const LatticePoint<D>& lo, const LatticePoint<D>& hi, const LatticePoint<D>& s,
                  const LatticePoint<D>& t) {
  std::map<LatticePoint<D>, Time> dist;
  std::vector<std::pair<LatticePoint<D>, LatticePoint<D>>> edges;
  std::vector<LatticePoint<D>> verts;
  LatticePoint<D> x = lo;
  std::function<void(std::size_t)> rec = [&](std::size_t j) {
    if (j == D) {
      verts.push_back(x);
      return;
    }
    for (x[j] = lo[j]; x[j] <= hi[j]; ++x[j]) rec(j + 1);
  };
  rec(0);
  for (const auto& v : verts) {
    dist[v] = Time::infinity();
    for (std::size_t j = 0; j < D; ++j)
      if (v[j] < hi[j]) {
        auto w = v;
        ++w[j];
        edges.emplace_back(v, w);
      }
  }
  dist[s] = Time();
  for (std::size_t round = 0; round < verts.size(); ++round)
    for (const auto& [a, b] : edges) {
      const Time w = Time::from_weight(f.weight(Edge<D>(a, b)));
      if (!dist[a].is_infinite() && dist[a] + w < dist[b]) dist[b] = dist[a] + w;
      if (!dist[b].is_infinite() && dist[b] + w < dist[a]) dist[a] = dist[b] + w;
    }
  return dist[t];
}

template <std::size_t D>
LatticePoint<D> random_point(std::mt19937_64& rng, std::int64_t r) {
  std::uniform_int_distribution<std::int64_t> c(-r, r);
  LatticePoint<D> x;
  for (auto& v : x) v = c(rng);
  return x;
}

template <class F>
void audit(const F& f, const PassageResult<F::dimension>& r, const Region<F::dimension>& region) {
  ASSERT_FALSE(r.path.empty());
  for (std::size_t i = 1; i < r.path.size(); ++i) ASSERT_TRUE(adjacent(r.path[i - 1], r.path[i]));
  for (const auto& v : r.path) ASSERT_TRUE(region_contains(region, v));
  ASSERT_EQ(path_time(f, r.path), r.time);
}

}  // namespace

TEST(PassageTime, ConstantStraightLine) {
  WeightField<2> f(1, Constant{0.05});
  const auto r = passage_time(f, point_query<2>({0, 0}, {10, 0}));
  EXPECT_NEAR(r.time.value(), 0.5, 1e-15);
  EXPECT_EQ(r.time, Time::from_weight(0.05) + Time::from_weight(0.05) + Time::from_weight(0.05) +
                        Time::from_weight(0.05) + Time::from_weight(0.05) + Time::from_weight(0.05) +
                        Time::from_weight(0.05) + Time::from_weight(0.05) + Time::from_weight(0.05) +
                        Time::from_weight(0.05));
}

TEST(PassageTime, SamePointIsZero) {
  WeightField<2> f(1, Uniform{0.01, 0.06});
  const auto r = passage_time(f, point_query<2>({4, -2}, {4, -2}));
  EXPECT_EQ(r.time, Time());
  EXPECT_EQ(r.path, (Path<2>{{4, -2}}));
}

TEST(PassageTime, SmallBoxMatchesEnumeration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    WeightField<2> f(seed, Uniform{0.001, 1.0 / 16});
    const LatticePoint<2> lo{0, 0}, hi{2, 1};
    const auto r = passage_time(f, point_query<2>(lo, hi, lattice_box<2>(lo, hi)));
    EXPECT_EQ(r.time, brute_force_passage(f, lo, hi, lo, hi).time);
    EXPECT_EQ(r.time, bellman_ford<2>(f, lo, hi, lo, hi));
  }
}

TEST(PassageTime, ThreeDimensionalBoxMatchesBellmanFord) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    WeightField<3> f(seed, TwoPoint{0.005, 1.0 / 36, 0.4});
    const LatticePoint<3> lo{0, 0, 0}, hi{2, 2, 1};
    std::mt19937_64 rng(seed);
    for (int k = 0; k < 5; ++k) {
      LatticePoint<3> s{static_cast<std::int64_t>(rng() % 3), static_cast<std::int64_t>(rng() % 3),
                        static_cast<std::int64_t>(rng() % 2)};
      LatticePoint<3> t{static_cast<std::int64_t>(rng() % 3), static_cast<std::int64_t>(rng() % 3),
                        static_cast<std::int64_t>(rng() % 2)};
      EXPECT_EQ(passage_time(f, point_query<3>(s, t, lattice_box<3>(lo, hi))).time, bellman_ford<3>(f, lo, hi, s, t));
    }
  }
}

TEST(PassageTime, DisconnectedAndBudget) {
  WeightField<2> f(1, Uniform{0.01, 0.06});
  EXPECT_THROW(passage_time(f, point_query<2>({0, 0}, {5, 5}, lattice_box<2>({0, 0}, {3, 3}))), DisconnectedError);
  EXPECT_THROW(passage_time(f, point_query<2>({0, 0}, {500, 0}, Everything{}, 100)), BudgetExhausted);
  EXPECT_THROW(point_time(f, {0, 0}, {500, 0}, Everything{}, 100), BudgetExhausted);
}

TEST(Geodesic, ConstantWeightsPickTheStraightPath) {
  WeightField<2> f(1, Constant{0.05});
  EXPECT_EQ(geodesic(f, point_query<2>({0, 0}, {3, 0})), (Path<2>{{0, 0}, {1, 0}, {2, 0}, {3, 0}}));
}

TEST(Geodesic, ZeroHeightSlabForcesTheAxisRow) {
  WeightField<2> f(3, Uniform{0.001, 1.0 / 16});
  Slab<2> s;
  s.frame.basis = {unit_vector<2>(1), unit_vector<2>(0)};
  s.lo = s.hi = 0;
  const auto p = geodesic(f, point_query<2>({0, 0}, {6, 0}, s));
  ASSERT_EQ(p.size(), 7u);
  for (std::int64_t i = 0; i <= 6; ++i) EXPECT_EQ(p[static_cast<std::size_t>(i)], (LatticePoint<2>{i, 0}));
}

TEST(Geodesic, TieBreakMatchesEnumeration) {
  // Two-point weights make many exact ties on the 3x3 vertex box.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    WeightField<2> f(seed, TwoPoint{0.02, 0.05, 0.5});
    const LatticePoint<2> lo{0, 0}, hi{2, 2};
    const auto r = passage_time(f, point_query<2>(lo, hi, lattice_box<2>(lo, hi)));
    const auto b = brute_force_passage(f, lo, hi, lo, hi);
    EXPECT_EQ(r.time, b.time);
    EXPECT_EQ(r.path, b.path) << "seed " << seed;
  }
}

TEST(MaxTransversalDeviation, Examples) {
  const Path<2> straight{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_EQ(max_transversal_deviation<2>(straight, {0, 0}, {1, 0}), 0.0);
  const Path<2> bent{{0, 0}, {5, 3}, {7, -1}};
  EXPECT_DOUBLE_EQ(max_transversal_deviation<2>(bent, {0, 0}, {1, 0}), 3.0);
  const double want = std::fabs(1 * 0.5 - 1 * 1) / std::sqrt(1.25);
  EXPECT_NEAR(max_transversal_deviation<2>(Path<2>{{1, 1}}, {0, 0}, {1, 0.5}), want, 1e-15);
  EXPECT_THROW(max_transversal_deviation<2>(bent, {0, 0}, {0, 0}), std::invalid_argument);
}

TEST(FaceToFace, ConstantCrossing) {
  WeightField<2> f(1, Constant{0.03});
  const Region<2> window = Box<2>{{-50, -50}, {50, 50}};
  const auto r = face_to_face_time(f, standard_frame<2>(), 0, 20, window);
  EXPECT_NEAR(r.time.value(), 20 * 0.03, 1e-15);
}

TEST(FaceToFace, NarrowWindowIsDisconnected) {
  WeightField<2> f(1, Constant{0.03});
  const Region<2> window = Box<2>{{0, -10}, {15, 10}};
  EXPECT_THROW(face_to_face_time(f, standard_frame<2>(), 0, 20, window), DisconnectedError);
}

TEST(FaceToFace, MatchesGenericEntryPoint) {
  WeightField<2> f(9, Uniform{0.001, 1.0 / 16});
  const Region<2> window = Box<2>{{-20, -20}, {20, 20}};
  const auto r = face_to_face_time(f, standard_frame<2>(), 1, 6, window);
  std::vector<LatticePoint<2>> src, dst;
  for (std::int64_t y = -20; y <= 20; ++y) {
    src.push_back({6, y});
    dst.push_back({12, y});
  }
  const auto direct = passage_time(f, QuerySpec<2>{window, src, TargetSet<2>::points(dst), std::nullopt});
  EXPECT_EQ(r.time, direct.time);
}

TEST(PointTime, BidirectionalEqualsUnidirectional) {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    WeightField<2> f(seed, seed % 2 ? DistributionSpec{TwoPoint{0.02, 0.05, 0.5}} : DistributionSpec{Uniform{0, 1.0 / 16}});
    const auto x = random_point<2>(rng, 30), y = random_point<2>(rng, 30);
    EXPECT_EQ(point_time(f, x, y), passage_time(f, point_query<2>(x, y)).time);
    Cylinder<2> c;
    c.base = to_real(x);
    c.lo = -40;
    c.hi = 80;
    c.height = 3;
    if (region_contains<2>(c, x) && region_contains<2>(c, y)) {
      EXPECT_EQ(point_time(f, x, y, c), passage_time(f, point_query<2>(x, y, c)).time);
    }
  }
  WeightField<3> g(5, Uniform{0.001, 1.0 / 36});
  for (int k = 0; k < 30; ++k) {
    const auto x = random_point<3>(rng, 10), y = random_point<3>(rng, 10);
    EXPECT_EQ(point_time(g, x, y), passage_time(g, point_query<3>(x, y)).time);
  }
}

TEST(PointTime, FarDetourOutsideTheSearchWindow) {
  // Cheap U-shaped road from (0,0) down to row -60 and back up to (10,0).
  PlantedField<WeightField<2>> f(WeightField<2>(1, Constant{1.0 / 16}), [](const Edge<2>& e) -> std::optional<double> {
    const auto a = e.a();
    if (e.axis() == 1 && (a[0] == 0 || a[0] == 10) && a[1] >= -60 && a[1] < 0) return 1e-6;
    if (e.axis() == 0 && a[1] == -60 && a[0] >= 0 && a[0] < 10) return 1e-6;
    return std::nullopt;
  });
  const LatticePoint<2> x{0, 0}, y{10, 0};
  const Time t = point_time(f, x, y);
  EXPECT_EQ(t, passage_time(f, point_query<2>(x, y)).time);
  EXPECT_EQ(t.ticks(), Time::from_weight(1e-6).ticks() * 130);
  const Box<2> box{{-2, -61}, {12, 1}};
  EXPECT_EQ(point_time(f, x, y, box), t);
  const Box<2> shallow{{-2, -59}, {12, 1}};
  EXPECT_EQ(point_time(f, x, y, shallow).ticks(), Time::from_weight(1.0 / 16).ticks() * 10);
}

TEST(PassageProperties, Symmetry) {
  WeightField<2> f(21, Uniform{0.001, 1.0 / 16});
  std::mt19937_64 rng(21);
  for (int k = 0; k < 1000; ++k) {
    const auto x = random_point<2>(rng, 12), y = random_point<2>(rng, 12);
    ASSERT_EQ(passage_time(f, point_query<2>(x, y)).time, passage_time(f, point_query<2>(y, x)).time);
  }
}

TEST(PassageProperties, TriangleInequalityIsExact) {
  WeightField<2> f(22, TwoPoint{0.01, 0.06, 0.3});
  std::mt19937_64 rng(22);
  for (int k = 0; k < 500; ++k) {
    const auto x = random_point<2>(rng, 12), y = random_point<2>(rng, 12), z = random_point<2>(rng, 12);
    ASSERT_LE(point_time(f, x, z), point_time(f, x, y) + point_time(f, y, z));
  }
}

TEST(PassageProperties, NestedCylindersAreMonotone) {
  WeightField<2> f(23, Uniform{0.001, 1.0 / 16});
  std::mt19937_64 rng(23);
  for (int k = 0; k < 200; ++k) {
    Cylinder<2> inner;
    inner.lo = -2;
    inner.hi = 22;
    inner.height = 1 + static_cast<double>(rng() % 4);
    Cylinder<2> outer = inner;
    outer.height += 1 + static_cast<double>(rng() % 5);
    outer.hi += static_cast<double>(rng() % 4);
    const LatticePoint<2> x{0, static_cast<std::int64_t>(rng() % 3) - 1};
    const LatticePoint<2> y{20, static_cast<std::int64_t>(rng() % 3) - 1};
    ASSERT_GE(point_time(f, x, y, inner), point_time(f, x, y, outer));
    ASSERT_GE(point_time(f, x, y, outer), point_time(f, x, y));
  }
}

TEST(PassageProperties, RaisingOneWeightNeverLowersTime) {
  WeightField<2> base(24, Uniform{0.001, 0.05});
  std::mt19937_64 rng(24);
  for (int k = 0; k < 300; ++k) {
    const auto x = random_point<2>(rng, 6), y = random_point<2>(rng, 6);
    const auto r = passage_time(base, point_query<2>(x, y));
    // Raise an edge on the geodesic half the time, a random nearby edge otherwise.
    Edge<2> e = Edge<2>::from_base(random_point<2>(rng, 6), static_cast<int>(rng() % 2));
    if (k % 2 == 0 && r.path.size() > 1) e = Edge<2>(r.path[0], r.path[1]);
    const double bump = 1.0 / 16;
    PlantedField<WeightField<2>> raised(base, [e, bump](const Edge<2>& q) -> std::optional<double> {
      if (q == e) return bump;
      return std::nullopt;
    });
    ASSERT_GE(passage_time(raised, point_query<2>(x, y)).time, r.time);
  }
}

TEST(PassageProperties, DistanceBounds) {
  const double lo = 0.01, hi = 0.06;
  WeightField<2> f(25, TwoPoint{lo, hi, 0.5});
  std::mt19937_64 rng(25);
  for (int k = 0; k < 1000; ++k) {
    const auto x = random_point<2>(rng, 15), y = random_point<2>(rng, 15);
    const double d = static_cast<double>(l1_distance(x, y));
    const Time t = point_time(f, x, y);
    ASSERT_TRUE(at_least(t, lo * d * (1 - 1e-15)));
    ASSERT_TRUE(at_most(t, hi * d * (1 + 1e-15)));
  }
}

TEST(PassageProperties, GeodesicsAuditExactly) {
  WeightField<3> f(26, TruncatedExponential{30, 1.0 / 36});
  std::mt19937_64 rng(26);
  for (int k = 0; k < 200; ++k) {
    const auto x = random_point<3>(rng, 6), y = random_point<3>(rng, 6);
    Cylinder<3> c;
    c.base = to_real(x);
    c.lo = -3;
    c.hi = 40;
    c.height = 8;
    if (!region_contains<3>(c, y)) continue;
    audit(f, passage_time(f, point_query<3>(x, y, c)), Region<3>{c});
  }
}

TEST(PassageTime, SetQueriesFloorThenFilter) {
  WeightField<2> f(27, Uniform{0.001, 1.0 / 16});
  const Region<2> box = lattice_box<2>({0, 0}, {10, 10});
  const auto src = floor_points<2>({{-0.5, 3.2}, {0.7, 3.9}});
  // (-1, 3) is outside the box and is skipped; (0, 3) remains.
  QuerySpec<2> q{box, src, TargetSet<2>::point({10, 3}), std::nullopt};
  const auto r = passage_time(f, q);
  EXPECT_EQ(r.src_hit, (LatticePoint<2>{0, 3}));
  EXPECT_EQ(r.time, point_time(f, {0, 3}, {10, 3}, box));
}
