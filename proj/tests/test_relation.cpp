// Tests for foliated regions, ray closest approaches, the three-to-one
// membership oracle, conical pieces, and earliest observation sets.
//
// Canonical flat battery (1+2 dimensions, signature (-,+,+)):
//   v1 = ((-2,-2,0),(1, 1,0)),  v2 = ((-2, 2,0),(1,-1,0)),
//   v3 = ((-2, 0,-2),(1,0, 1)), v0 = (( 3, 0,-3),(1,0,-1)).
// The straight rays gamma_j(s) = base + s*xi all pass through the origin
// (s = 2 for the incoming three, s = -3 backward for v0), and
// xi0 = xi1 + xi2 - xi3, so the span coefficients normalized to
// kappa_0 = 1 are kappa = (1, -1, -1, 1).
//
// Regions: source cylinder around the path (-3,0,0) -> (0.6,0,0) with
// transverse radius 2.2 (contains the three bases at radius 2), observation
// cylinder around (-2.6,0,-3) -> (3.15,0,-3) with radius 0.4 (contains the
// v0 base).  With these windows the separation conditions hold with small
// margins: the earliest observation slice sits at time -2.6 while the
// nearest source signal (spatial gap 0.4, earliest departure -3) arrives
// after -2.6; the future of the latest source-path point (0.6,0,0) reaches
// the observation cylinder (spatial distance >= 2.6) only after time 3.2,
// beyond its final slice at 3.15.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "gbeam/relation.hpp"

using namespace gbeam;

namespace {

Vec v3d(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec v4d(double a, double b, double c, double d) {
  Vec v(4);
  v << a, b, c, d;
  return v;
}

MetricPtr mink2() { return make_minkowski(2); }

Foliation fin2(const MetricPtr& m) {
  return Foliation(m, FolSide::In, v3d(-3, 0, 0), v3d(0.6, 0, 0), 2.2);
}

Foliation fout2(const MetricPtr& m) {
  return Foliation(m, FolSide::Out, v3d(-2.6, 0, -3), v3d(3.15, 0, -3), 0.4);
}

LightVec cv0() { return {v3d(3, 0, -3), v3d(1, 0, -1)}; }
LightVec cv1() { return {v3d(-2, -2, 0), v3d(1, 1, 0)}; }
LightVec cv2() { return {v3d(-2, 2, 0), v3d(1, -1, 0)}; }
LightVec cv3() { return {v3d(-2, 0, -2), v3d(1, 0, 1)}; }

}  // namespace

TEST_CASE("foliation chart: map, locate, containment, bounding box") {
  auto m = mink2();
  Foliation fin = fin2(m);

  // vertical path: frame is the spatial coordinate frame, map is affine
  CHECK((fin.mu(-1.0) - v3d(-3, 0, 0)).norm() == doctest::Approx(0).epsilon(1e-14));
  CHECK((fin.mu(1.0) - v3d(0.6, 0, 0)).norm() == doctest::Approx(0).epsilon(1e-14));
  Vec a(2);
  a << 0.5, -1.0;
  CHECK((fin.map(0.0, a) - v3d(-1.2, 0.5, -1.0)).norm() < 1e-12);

  // locate round trip
  Vec aa(2);
  aa << 1.0, -0.7;
  const Vec x = fin.map(0.3, aa);
  double t = 0;
  Vec arec;
  REQUIRE(fin.locate(x, t, arec));
  CHECK(t == doctest::Approx(0.3).epsilon(1e-12));
  CHECK((arec - aa).norm() < 1e-12);

  CHECK(fin.contains(v3d(-1.2, 0.5, -1.0)));
  CHECK_FALSE(fin.contains(v3d(-3.5, 0, 0)));   // before the first slice
  CHECK_FALSE(fin.contains(v3d(-1.2, 2.3, 0)));  // outside the radius

  CHECK(fin.curves_timelike_future());

  const Box b = fin.bounding_box(0.0);
  CHECK((b.lo - v3d(-3, -2.2, -2.2)).norm() < 1e-12);
  CHECK((b.hi - v3d(0.6, 2.2, 2.2)).norm() < 1e-12);

  // tilted timelike path still round-trips
  Foliation tilted(m, FolSide::In, v3d(-1, -0.3, 0), v3d(1, 0.3, 0), 1.0);
  Vec ab(2);
  ab << 0.4, 0.6;
  const Vec xt = tilted.map(-0.2, ab);
  double tt = 0;
  Vec at;
  REQUIRE(tilted.locate(xt, tt, at));
  CHECK(tt == doctest::Approx(-0.2).epsilon(1e-10));
  CHECK((at - ab).norm() < 1e-10);
  CHECK(tilted.curves_timelike_future());

  // invalid paths are rejected
  CHECK_THROWS_AS(Foliation(m, FolSide::In, v3d(0, 0, 0), v3d(0.5, 2, 0), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(Foliation(m, FolSide::In, v3d(0, 0, 0), v3d(1, 0, 0), 0.0),
                  std::invalid_argument);
}

TEST_CASE("foliation separation conditions on the canonical regions") {
  auto m = mink2();
  CausalOracle oc(m);
  CHECK(foliation_separation(fin2(m), fout2(m), oc));

  // observation window opening too late in the past: its earliest slice at
  // time -0.5 is reachable from the sources (gap 0.4, departure <= 0.6)
  Foliation late(m, FolSide::Out, v3d(-0.5, 0, -3), v3d(3, 0, -3), 0.4);
  CHECK_FALSE(foliation_separation(fin2(m), late, oc));

  // observation window running too far into the future: the final slice at
  // time 5 lies inside the future of the last source-path point (0.6,0,0)
  Foliation long_out(m, FolSide::Out, v3d(-2.6, 0, -3), v3d(5, 0, -3), 0.4);
  CHECK_FALSE(foliation_separation(fin2(m), long_out, oc));
}

TEST_CASE("ray tracing, closest approaches, point distances") {
  auto m = mink2();
  const Box K = Box::centered(v3d(0, 0, 0), 8.0);

  // crossing lines: (s,s,0) and (u, 2-u, 0) meet at (1,1,0)
  Ray A = trace_ray(m, v3d(0, 0, 0), v3d(1, 1, 0), +1.0, K, 10.0);
  Ray B = trace_ray(m, v3d(0, 2, 0), v3d(1, -1, 0), +1.0, K, 10.0);
  auto aps = closest_approaches(A.geo, A.s_lo, A.s_hi, B.geo, B.s_lo, B.s_hi,
                                64);
  REQUIRE_FALSE(aps.empty());
  CHECK(aps.front().dist < 1e-9);
  CHECK(aps.front().sa == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(aps.front().sb == doctest::Approx(1.0).epsilon(1e-6));

  // skew lines (s,s,0) and (u,2-u,0.5): distance^2 = (s-u)^2+(s+u-2)^2+1/4
  Ray B2 = trace_ray(m, v3d(0, 2, 0.5), v3d(1, -1, 0), +1.0, K, 10.0);
  auto aps2 = closest_approaches(A.geo, A.s_lo, A.s_hi, B2.geo, B2.s_lo,
                                 B2.s_hi, 64);
  REQUIRE_FALSE(aps2.empty());
  CHECK(aps2.front().dist == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(aps2.front().sa == doctest::Approx(1.0).epsilon(1e-4));

  // box clipping: the ray (s,s,0) leaves [-2,2]^3 at s = 2
  const Box K2 = Box::centered(v3d(0, 0, 0), 2.0);
  Ray C = trace_ray(m, v3d(0, 0, 0), v3d(1, 1, 0), +1.0, K2, 10.0);
  CHECK(C.s_hi == doctest::Approx(2.0).epsilon(1e-5));
  Ray Cb = trace_ray(m, v3d(0, 0, 0), v3d(1, 1, 0), -1.0, K2, 10.0);
  CHECK(Cb.s_lo == doctest::Approx(-2.0).epsilon(1e-5));

  // point-to-ray: distance from (0,1,0) to (s,s,0) is sqrt(1/2) at s = 1/2
  double s_at = 0;
  const double d = point_ray_distance(A.geo, A.s_lo, A.s_hi, v3d(0, 1, 0),
                                      s_at);
  CHECK(d == doctest::Approx(std::sqrt(0.5)).epsilon(1e-8));
  CHECK(s_at == doctest::Approx(0.5).epsilon(1e-6));

  // same curve under base shift and tangent rescale; distinct otherwise
  CHECK(same_null_curve(m, {v3d(0, 0, 0), v3d(1, 1, 0)},
                        {v3d(1, 1, 0), v3d(2, 2, 0)}, K, 10.0));
  CHECK_FALSE(same_null_curve(m, {v3d(0, 0, 0), v3d(1, 1, 0)},
                              {v3d(0, 2, 0), v3d(1, -1, 0)}, K, 10.0));
  CHECK_FALSE(same_null_curve(m, {v3d(0, 0, 0), v3d(1, 1, 0)},
                              {v3d(0, 0, 0.5), v3d(1, 1, 0)}, K, 10.0));
}

TEST_CASE("membership: canonical member quadruple with hand-checked witness") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));

  const QuadResult q = R.membership(cv0(), cv1(), cv2(), cv3());
  REQUIRE(q.verdict == Verdict::member);
  REQUIRE(q.witness.has_value());
  const QuadWitness& w = *q.witness;
  CHECK(w.y.norm() < 1e-6);
  CHECK(w.s[0] == doctest::Approx(-3.0).epsilon(1e-6));
  CHECK(w.s[1] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(w.s[2] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(w.s[3] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(w.meet_error < 1e-7);
  REQUIRE(w.kappa.size() == 4);
  CHECK(w.kappa(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(w.kappa(1) == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(w.kappa(2) == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(w.kappa(3) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(w.span_residual < 1e-9);
  CHECK(q.pair_gap < 1e-7);

  // soundness of the witness: every ray really passes through y
  for (int j = 0; j < 4; ++j) {
    CHECK(w.s[j] * (j == 0 ? -1.0 : 1.0) >= -1e-9);
    CHECK((w.xi[j](0)) > 0);
  }
}

TEST_CASE("membership: separated quadruple is a nonmember") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));

  // shift the third base by 0.5 in the last coordinate; rays 1 and 3 then
  // stay sqrt(1/12)*... = 0.2887 apart at closest approach (minimize
  // (s-u)^2 + (s-2)^2 + (u-1.5)^2 over the two line parameters)
  LightVec v3s{v3d(-2, 0, -1.5), v3d(1, 0, 1)};
  const QuadResult q = R.membership(cv0(), cv1(), cv2(), v3s);
  REQUIRE(q.verdict == Verdict::nonmember);
  CHECK(q.pair_gap > 0.28);
  CHECK(q.pair_gap < 0.30);
  CHECK(q.reason.find("no common point") != std::string::npos);
}

TEST_CASE("membership: span failure in 1+3 dimensions is unknown") {
  auto m = make_minkowski(3);
  Foliation fin(m, FolSide::In, v4d(-3, 0, 0, 0), v4d(0.6, 0, 0, 0), 2.2);
  Foliation fout(m, FolSide::Out, v4d(-2.6, 0, 0, 3), v4d(3.15, 0, 0, 3),
                 0.4);
  RelationOracle R(m, fin, fout);

  // all four rays meet at the origin, but xi0 = (1,0,0,1) has a component
  // outside span{(1,1,0,0),(1,-1,0,0),(1,0,1,0)} (last coordinate)
  LightVec v0{v4d(3, 0, 0, 3), v4d(1, 0, 0, 1)};
  LightVec v1{v4d(-2, -2, 0, 0), v4d(1, 1, 0, 0)};
  LightVec v2{v4d(-2, 2, 0, 0), v4d(1, -1, 0, 0)};
  LightVec v3{v4d(-2, 0, -2, 0), v4d(1, 0, 1, 0)};
  const QuadResult q = R.membership(v0, v1, v2, v3);
  REQUIRE(q.verdict == Verdict::unknown);
  CHECK(q.reason.find("span") != std::string::npos);
  REQUIRE(q.witness.has_value());
  CHECK(q.witness->y.norm() < 1e-6);
}

TEST_CASE("membership: validation and distinctness guards") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));

  // timelike direction rejected
  LightVec bad{v3d(-2, -2, 0), v3d(1, 0.5, 0)};
  CHECK_THROWS_AS(R.membership(cv0(), bad, cv2(), cv3()),
                  std::invalid_argument);

  // base outside the source region rejected
  LightVec outside{v3d(-2, 2.5, 0), v3d(1, -1, 0)};
  CHECK_THROWS_AS(R.membership(cv0(), cv1(), outside, cv3()),
                  std::invalid_argument);

  // two entries generating the same null curve: unknown, not a throw
  LightVec dup{v3d(-1, -1, 0), v3d(2, 2, 0)};  // v1 shifted along itself
  const QuadResult q = R.membership(cv0(), cv1(), dup, cv3());
  REQUIRE(q.verdict == Verdict::unknown);
  CHECK(q.reason.find("same null curve") != std::string::npos);
}

TEST_CASE("membership: randomized completeness battery of true members") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));
  CounterRng rng{90210};
  std::uint64_t ctr = 0;

  int built = 0;
  for (int trial = 0; trial < 200 && built < 30; ++trial) {
    // small random meeting point and four pairwise-separated directions
    Vec y = v3d(rng.uniform(ctr++, -0.05, 0.05),
                rng.uniform(ctr++, -0.05, 0.05),
                rng.uniform(ctr++, -0.05, 0.05));
    std::vector<double> th;
    bool ok = true;
    for (int j = 0; j < 3 && ok; ++j) {
      double cand = 0;
      bool found = false;
      for (int att = 0; att < 40 && !found; ++att) {
        cand = rng.uniform(ctr++, 0.0, 2.0 * kPi);
        found = true;
        for (double p : th)
          if (std::abs(std::remainder(cand - p, 2.0 * kPi)) < 0.2)
            found = false;
      }
      ok = found;
      th.push_back(cand);
    }
    if (!ok) continue;

    // incoming rays traced back to the source time slab around t = -2
    std::vector<LightVec> vin;
    for (double t : th) {
      const Vec xi = v3d(1, std::cos(t), std::sin(t));
      const double s = y(0) + 2.0;
      vin.push_back({y - s * xi, xi});
    }
    // observation ray aimed at the spatial center of the far cylinder
    Vec u = v3d(0, 0, -3) - v3d(0, y(1), y(2));
    const double sstar = u.norm();
    u /= sstar;
    const Vec xi0 = v3d(1, u(1), u(2));
    // keep away from the incoming directions
    const double th0 = std::atan2(u(2), u(1));
    bool sep = true;
    for (double p : th)
      if (std::abs(std::remainder(th0 - p, 2.0 * kPi)) < 0.2) sep = false;
    if (!sep) continue;
    LightVec v0{y + sstar * xi0, xi0};

    ++built;
    const QuadResult q = R.membership(v0, vin[0], vin[1], vin[2]);
    REQUIRE(q.verdict == Verdict::member);
    REQUIRE(q.witness.has_value());
    CHECK((q.witness->y - y).norm() < 2e-6);
    CHECK(q.witness->span_residual < 1e-8);
    CHECK(q.witness->s[0] < 0);
    for (int j = 1; j < 4; ++j) CHECK(q.witness->s[j] > 0);
  }
  CHECK(built == 30);
}

TEST_CASE("conical piece through the canonical meeting point") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));

  const auto piece = R.conical_piece(cv1(), cv2(), 96);
  REQUIRE(piece.meeting_points.size() == 1);
  CHECK(piece.meeting_points[0].norm() < 1e-6);
  REQUIRE(piece.samples.size() > 20);
  CHECK(piece.max_flowout_gap < 1e-6);
  CHECK(piece.pitch > 0);

  Foliation fout = fout2(m);
  double t_lo = 1e9, t_hi = -1e9;
  for (const auto& cs : piece.samples) {
    CHECK(fout.contains(cs.v0.x));
    CHECK(m->classify(cs.v0.x, cs.v0.xi) == CausalClass::Null);
    CHECK(m->is_future_causal(cs.v0.x, cs.v0.xi));
    // crossing distances from the origin to the far cylinder
    CHECK(cs.ray_s > 2.4);
    CHECK(cs.ray_s < 3.6);
    t_lo = std::min(t_lo, cs.v0.x(0));
    t_hi = std::max(t_hi, cs.v0.x(0));
  }
  CHECK(t_hi - t_lo > 0.3);  // a genuine two-dimensional piece, not a point

  // principal components of the sampled base points: two strong directions
  // (the piece is a surface), the third only the sag of the cone
  Mat X(static_cast<int>(piece.samples.size()), 3);
  Vec mean = Vec::Zero(3);
  for (std::size_t i = 0; i < piece.samples.size(); ++i)
    mean += piece.samples[i].v0.x;
  mean /= static_cast<double>(piece.samples.size());
  for (std::size_t i = 0; i < piece.samples.size(); ++i)
    X.row(static_cast<int>(i)) = (piece.samples[i].v0.x - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(X.transpose() * X /
                                        static_cast<double>(X.rows()));
  const Vec ev = es.eigenvalues();  // ascending
  CHECK(ev(1) > 1e-4);
  CHECK(ev(0) < 0.05 * ev(2));

  // parallel rays never meet: no meeting points, no samples
  LightVec par{v3d(-2, 2, 0), v3d(1, 1, 0)};
  const auto empty_piece = R.conical_piece(cv1(), par, 32);
  CHECK(empty_piece.meeting_points.empty());
  CHECK(empty_piece.samples.empty());

  // zero budget: meeting points reported, no samples
  const auto lazy = R.conical_piece(cv1(), cv2(), 0);
  CHECK(lazy.meeting_points.size() == 1);
  CHECK(lazy.samples.empty());
}

TEST_CASE("earliest observation set built directly from a point") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));
  CausalOracle oc(m);

  const auto set = R.earliest_direct(v3d(0, 0, 0), 128);
  REQUIRE(set.samples.size() > 20);
  CHECK_FALSE(set.from_relation);
  CHECK(set.pitch > 0);
  Foliation fout = fout2(m);
  int checked = 0;
  for (const auto& s : set.samples) {
    CHECK(fout.contains(s.x));
    // flat light cone from the origin: x^0 equals the spatial radius
    const double r = std::hypot(s.x(1), s.x(2));
    CHECK(std::abs(s.x(0) - r) < 1e-9);
    if (checked++ < 20) CHECK(is_optimizing(oc, v3d(0, 0, 0), s.x));
  }

  // a point whose forward cone misses the observation window: empty set
  const auto none = R.earliest_direct(v3d(5, 0, 0), 64);
  CHECK(none.samples.empty());

  // a point preceding the earliest observation slice is rejected
  CHECK_THROWS_AS(R.earliest_direct(v3d(-6, 0, -3), 16),
                  std::invalid_argument);
}

TEST_CASE("earliest set from the relation matches the direct set") {
  auto m = mink2();
  RelationOracle R(m, fin2(m), fout2(m));

  const auto direct = R.earliest_direct(v3d(0, 0, 0), 96);
  const auto rel = R.earliest_from_relation(cv1(), cv2(), 96);
  REQUIRE_FALSE(direct.samples.empty());
  REQUIRE_FALSE(rel.samples.empty());
  CHECK(rel.from_relation);
  REQUIRE(rel.meeting_points.size() == 1);
  CHECK(rel.meeting_points[0].norm() < 1e-6);

  // in flat space nothing in the piece chronologically precedes anything
  // else (two points of one light cone are never timelike separated), so
  // the no-earlier filter keeps everything
  CHECK(rel.samples.size() == rel.cone_samples.size());

  const double H = hausdorff_chart(rel, direct, fout2(m));
  const double pitch = std::max(rel.pitch, direct.pitch);
  CHECK(H < 5.0 * pitch);

  // halving the budget coarsens the pitch roughly linearly and the sets
  // stay within the coarser resolution
  const auto rel48 = R.earliest_from_relation(cv1(), cv2(), 48);
  REQUIRE_FALSE(rel48.samples.empty());
  CHECK(rel48.pitch < 2.6 * rel.pitch);
  CHECK(hausdorff_chart(rel48, direct, fout2(m)) < 5.0 * rel48.pitch);

  // parallel generators produce an empty relation-derived set
  LightVec par{v3d(-2, 2, 0), v3d(1, 1, 0)};
  const auto none = R.earliest_from_relation(cv1(), par, 32);
  CHECK(none.samples.empty());
  CHECK(none.meeting_points.empty());
}
