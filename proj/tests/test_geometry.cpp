#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fpp/geometry.hpp"

using namespace fpp;

TEST(FloorPoint, Examples) {
  EXPECT_EQ(floor_point(RealPoint<2>{1.5, -0.3}), (LatticePoint<2>{1, -1}));
  EXPECT_EQ(floor_point(RealPoint<2>{2, 3}), (LatticePoint<2>{2, 3}));
  EXPECT_EQ(floor_point(RealPoint<2>{-0.0001, 0.9999}), (LatticePoint<2>{-1, 0}));
}

TEST(FloorPoint, CellContainsPoint) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 100'000; ++i) {
    RealPoint<3> x{u(rng), u(rng), u(rng)};
    const auto z = floor_point(x);
    for (std::size_t j = 0; j < 3; ++j) {
      // Differences of doubles this size are exact.
      const double r = x[j] - static_cast<double>(z[j]);
      ASSERT_GE(r, 0.0);
      ASSERT_LT(r, 1.0);
    }
  }
}

TEST(MakeFrame, AxisDirectionGivesStandardBasis) {
  for (const ShapeModel<3>& m : {ShapeModel<3>{L1Ball{}}, ShapeModel<3>{EuclideanBall{}}}) {
    const auto f = make_frame<3>(unit_vector<3>(0), m);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(f.basis[i], unit_vector<3>(i));
  }
}

TEST(MakeFrame, DiagonalEuclidean) {
  const double r = 1 / std::sqrt(2.0);
  const auto f = make_frame<2>({r, r}, EuclideanBall{});
  // Tangent of a circle is orthogonal to the radius; first nonzero entry positive.
  EXPECT_NEAR(f.basis[1][0], r, 1e-12);
  EXPECT_NEAR(f.basis[1][1], -r, 1e-12);
}

TEST(MakeFrame, DiagonalL1FollowsTheFacet) {
  const double r = 1 / std::sqrt(2.0);
  const auto f = make_frame<2>({r, r}, L1Ball{});
  // The l1 ball facet x + y = 1 has direction (-1, 1)/sqrt 2.
  EXPECT_NEAR(std::fabs(f.basis[1][0] * -r + f.basis[1][1] * r), 1.0, 1e-12);
  EXPECT_GT(f.basis[1][0], 0);
}

TEST(MakeFrame, L1TiltedDirectionKeepsTheFacetNormal) {
  const RealPoint<2> u = detail::normalized(RealPoint<2>{1, 0.3});
  const auto f = make_frame<2>(u, L1Ball{});
  const double r = 1 / std::sqrt(2.0);
  EXPECT_NEAR(f.basis[0][0], r, 1e-12);
  EXPECT_NEAR(f.basis[0][1], r, 1e-12);
}

TEST(MakeFrame, EmpiricalRankDeficientIsRejected) {
  EmpiricalShape<3> s{{RealPoint<3>{0, 1, 0}, RealPoint<3>{0, 2, 0}}};
  EXPECT_THROW(make_frame<3>(detail::normalized(RealPoint<3>{1, 1, 1}), s), std::invalid_argument);
  EmpiricalShape<3> ok{{RealPoint<3>{0, 1, 0}, RealPoint<3>{0, 0, 1}}};
  const auto f = make_frame<3>(detail::normalized(RealPoint<3>{1, 1, 1}), ok);
  EXPECT_NEAR(f.basis[0][0], 1.0, 1e-12);
}

template <std::size_t D>
void check_random_frames(const ShapeModel<D>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (int n = 0; n < 1000; ++n) {
    RealPoint<D> u;
    for (auto& c : u) c = g(rng);
    u = detail::normalized(u);
    const auto f = make_frame<D>(u, model);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j)
        ASSERT_NEAR(dot(f.basis[i], f.basis[j]), i == j ? 1.0 : 0.0, 1e-12);
    ASSERT_GT(dot(f.basis[0], u), 0);
  }
}

TEST(MakeFrame, RandomDirectionsAreOrthonormalAndOriented) {
  check_random_frames<2>(EuclideanBall{}, 1);
  check_random_frames<3>(EuclideanBall{}, 2);
  check_random_frames<4>(EuclideanBall{}, 3);
  check_random_frames<2>(L1Ball{}, 4);
  check_random_frames<3>(L1Ball{}, 5);
  check_random_frames<4>(L1Ball{}, 6);
}

TEST(RegionContains, AxisCylinderExamples) {
  Cylinder<2> c;
  c.lo = 0;
  c.hi = 10;
  c.height = 2;
  EXPECT_TRUE(region_contains<2>(c, RealPoint<2>{5, 1.5}));
  EXPECT_FALSE(region_contains<2>(c, RealPoint<2>{5, 2.5}));
}

TEST(RegionContains, TiltedAxisAgainstLinearSolve) {
  Cylinder<2> c;
  c.axis = detail::normalized(RealPoint<2>{1, 0.1});
  c.lo = 0;
  c.hi = 10;
  c.height = 1;
  const RealPoint<2> x{5 * c.axis[0], 5 * c.axis[1] + 0.9};
  // x = y1 * axis + y2 * e2: y1 = x0 / axis0, y2 = x1 - y1 * axis1.
  const double y1 = x[0] / c.axis[0];
  const double y2 = x[1] - y1 * c.axis[1];
  EXPECT_NEAR(y1, 5, 1e-12);
  EXPECT_NEAR(y2, 0.9, 1e-12);
  const auto y = cylinder_coords(c, x);
  EXPECT_NEAR(y[0], y1, 1e-12);
  EXPECT_NEAR(y[1], y2, 1e-12);
  EXPECT_TRUE(region_contains<2>(c, x));
}

TEST(RegionContains, SingularAxisIsRejected) {
  Cylinder<2> c;
  c.axis = unit_vector<2>(1);
  EXPECT_THROW(region_contains<2>(c, RealPoint<2>{0, 0}), std::domain_error);
}

TEST(RegionContains, AxisCylinderMatchesCoordinateComparison) {
  Cylinder<3> c;
  c.base = {1.5, -2, 0.25};
  c.lo = -3;
  c.hi = 7;
  c.height = 2.5;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 100'000; ++i) {
    RealPoint<3> x{u(rng), u(rng), u(rng)};
    const bool direct = x[0] - c.base[0] >= c.lo && x[0] - c.base[0] <= c.hi &&
                        std::fabs(x[1] - c.base[1]) <= c.height && std::fabs(x[2] - c.base[2]) <= c.height;
    ASSERT_EQ(region_contains<3>(c, x), direct);
  }
}

TEST(RegionContains, BoxAndSlab) {
  const Region<2> b = lattice_box<2>({0, 0}, {2, 1});
  EXPECT_TRUE(region_contains<2>(b, LatticePoint<2>{2, 1}));
  EXPECT_FALSE(region_contains<2>(b, LatticePoint<2>{3, 1}));
  Slab<2> s;
  s.lo = 0;
  s.hi = 4;
  EXPECT_TRUE(region_contains<2>(s, LatticePoint<2>{4, -100}));
  EXPECT_FALSE(region_contains<2>(s, LatticePoint<2>{5, 0}));
  EXPECT_FALSE(bounding_box<2>(s).has_value());
}

TEST(GridPoints, Examples) {
  const auto a = grid_points({0, 1, 4});
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0], (Rational{1, 4}));
  EXPECT_EQ(a[1], (Rational{2, 4}));
  EXPECT_EQ(a[2], (Rational{3, 4}));
  EXPECT_TRUE(grid_points({0.3, 0.35, 4}).empty());
  const auto c = grid_points({0.6, 1, 5});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (Rational{4, 5}));
  EXPECT_THROW(grid_points({1, 1, 4}), std::invalid_argument);
}

TEST(GridPoints, InteriorWithExactGaps) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  std::uniform_int_distribution<std::int64_t> L(1, 50);
  for (int n = 0; n < 2000; ++n) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const GridSpec g{a, b, L(rng)};
    const auto pts = grid_points(g);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ASSERT_EQ(pts[i].den, g.L);
      ASSERT_GE(pts[i].value(), a + 1.0 / g.L - 1e-12);
      ASSERT_LE(pts[i].value(), b - 1.0 / g.L + 1e-12);
      if (i > 0) ASSERT_EQ(pts[i].num - pts[i - 1].num, 1);
    }
  }
}

TEST(EnumerateFace, AxisAligned) {
  FaceSpec<2> f;
  f.axial = 3;
  f.radius = 2;
  f.spacing = 1;
  const auto pts = enumerate_face(f);
  const std::vector<LatticePoint<2>> want{{3, -2}, {3, -1}, {3, 0}, {3, 1}, {3, 2}};
  EXPECT_EQ(pts, want);
}

TEST(EnumerateFace, SmallRadiusIsOneCell) {
  FaceSpec<2> f;
  f.axial = 0;
  f.radius = 0.4;
  f.spacing = 1;
  EXPECT_EQ(enumerate_face(f), (std::vector<LatticePoint<2>>{{0, 0}}));
}

TEST(EnumerateFace, TiltedAxisMatchesDirectEvaluation) {
  FaceSpec<2> f;
  f.axis = detail::normalized(RealPoint<2>{1, 0.2});
  f.axial = 10;
  f.radius = 3;
  f.spacing = 1.5;
  std::vector<LatticePoint<2>> want;
  for (double y2 : {-3.0, -1.5, 0.0, 1.5, 3.0})
    want.push_back(floor_point(RealPoint<2>{10 * f.axis[0], 10 * f.axis[1] + y2}));
  std::sort(want.begin(), want.end());
  want.erase(std::unique(want.begin(), want.end()), want.end());
  EXPECT_EQ(enumerate_face(f), want);
}

TEST(EnumerateFace, CapFailsLoudly) {
  FaceSpec<3> f;
  f.radius = 100;
  EXPECT_THROW(enumerate_face(f, 1000), FaceTooLarge);
}

TEST(EnumerateFace, ContinuumTiltedFaceCoversEveryFloorImage) {
  // Every floor image of a dense sample of the face must be enumerated.
  const auto frame = make_frame<2>(detail::normalized(RealPoint<2>{1, 0.4}), EuclideanBall{});
  FaceSpec<2> f;
  f.frame = frame;
  f.axis = frame.u;
  f.axial = 7.3;
  f.radius = 4;
  const auto pts = enumerate_face(f);
  for (int k = -4000; k <= 4000; ++k) {
    const double y = k / 1000.0;
    const RealPoint<2> x = axpy(y, frame.basis[1], axpy(f.axial, f.axis, RealPoint<2>{}));
    ASSERT_TRUE(std::binary_search(pts.begin(), pts.end(), floor_point(x))) << y;
  }
}

TEST(PlaneSet, AxisNormalReducesToFloorCoordinate) {
  const auto p = tangent_plane_through(standard_frame<2>(), RealPoint<2>{3.5, 0});
  EXPECT_TRUE(p.contains({3, 17}));
  EXPECT_FALSE(p.contains({4, 0}));
  EXPECT_FALSE(p.contains({2, 0}));
}
