// Causal relations, time separation, cut times, earliest observation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gbeam/causality.hpp"
#include "gbeam/util.hpp"

using namespace gbeam;

namespace {
Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// shared focusing sandwich-wave scenario (see test_geodesics for the
// conjugate-point derivation): amplitude -0.8, bump at u = 0, source at
// u = -6 so the lens strength exceeds critical.
std::shared_ptr<const PerturbedMinkowskiMetric> focusing_metric() {
  static auto m = std::make_shared<PerturbedMinkowskiMetric>(2, -0.8, 0.0, 0.5,
                                                             1.0, 8.0);
  return m;
}

double focusing_conjugate_oracle() {
  auto mb = focusing_metric();
  double j = 0.0, dj = 1.0, s = 0.0;
  const double h = 1e-4;
  while (s < 8.0) {
    auto acc = [&](double ss, double jj) {
      return 4.0 * (-0.8) * mb->wprof(-6.0 + 2.0 * ss) * jj;
    };
    const double k1j = dj, k1d = acc(s, j);
    const double k2j = dj + 0.5 * h * k1d,
                 k2d = acc(s + 0.5 * h, j + 0.5 * h * k1j);
    const double k3j = dj + 0.5 * h * k2d,
                 k3d = acc(s + 0.5 * h, j + 0.5 * h * k2j);
    const double k4j = dj + h * k3d, k4d = acc(s + h, j + h * k3j);
    const double jn = j + h / 6 * (k1j + 2 * k2j + 2 * k3j + k4j);
    dj += h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d);
    if (j > 0 && jn <= 0 && s > 0.1) return s + h * j / (j - jn);
    j = jn;
    s += h;
  }
  return -1.0;
}
}  // namespace

TEST_CASE("time separation closed forms") {
  auto mf = make_minkowski(2);
  CHECK(std::abs(time_separation(mf, v3(0, 0, 0), v3(2, 1, 0)) -
                 std::sqrt(3.0)) < 1e-9);
  auto c4 = make_conformal_constant(2, 4.0);
  CHECK(std::abs(time_separation(c4, v3(0, 0, 0), v3(2, 1, 0)) -
                 2.0 * std::sqrt(3.0)) < 1e-9);
  // not causally related -> 0
  CHECK(time_separation(mf, v3(0, 0, 0), v3(1, 2, 0)) == doctest::Approx(0.0));
  CHECK(time_separation(mf, v3(0, 0, 0), v3(-1, 0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("causal relation verdicts with tolerance band") {
  auto m = make_minkowski(2);
  CHECK(causal_relation(m, v3(0, 0, 0), v3(2, 1, 0)) ==
        CausalVerdict::Chronological);
  CHECK(causal_relation(m, v3(0, 0, 0), v3(1, 1, 0)) ==
        CausalVerdict::CausalNull);
  CHECK(causal_relation(m, v3(0, 0, 0), v3(1, 2, 0)) == CausalVerdict::None);
  CHECK(causal_relation(m, v3(0, 0, 0), v3(-2, 1, 0)) == CausalVerdict::None);
  // reflexive pair sits in the null band
  CHECK(causal_relation(m, v3(0.3, 0.4, 0.5), v3(0.3, 0.4, 0.5)) ==
        CausalVerdict::CausalNull);
}

TEST_CASE("reverse triangle inequality on random causal chains") {
  for (auto metric : {make_minkowski(2), make_conformal_constant(2, 4.0)}) {
    CausalOracle oc(metric);
    CounterRng rng{11};
    int checked = 0;
    for (int i = 0; i < 200 && checked < 40; ++i) {
      const Vec x = v3(0, rng.uniform(4 * i, -1, 1), rng.uniform(4 * i + 1, -1, 1));
      const Vec y = x + v3(1.0, rng.uniform(4 * i + 2, -0.9, 0.9),
                           rng.uniform(4 * i + 3, -0.9, 0.9));
      const Vec z = y + v3(1.3, rng.uniform(1000 + 4 * i, -0.9, 0.9),
                           rng.uniform(1001 + 4 * i, -0.9, 0.9));
      if (!oc.chronological(x, y) || !oc.chronological(y, z)) continue;
      ++checked;
      CHECK(oc.tau(x, z) >= oc.tau(x, y) + oc.tau(y, z) - 1e-9);
    }
    CHECK(checked >= 40);
  }
}

TEST_CASE("time separation by timelike shooting on a warped product") {
  // g = -c(t) dt^2 + dx^2 + dy^2 with c a bump in time; the static worldline
  // is geodesic and maximizing, so tau = integral sqrt(c(t)) dt.
  auto lapse = ScalarField::gaussian_bump(1.0, 0.5, v3(0, 0, 0), 0.6);
  auto m = make_warped_product(2, lapse, ScalarField::constant(1.0));
  const double t0 = -0.8, t1 = 0.8;
  // Simpson oracle for the proper-time integral
  const int N = 2000;
  double acc = 0.0;
  for (int i = 0; i <= N; ++i) {
    const double t = t0 + (t1 - t0) * i / N;
    const double w = (i == 0 || i == N) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::sqrt(lapse.value(v3(t, 0, 0)));
  }
  const double tau_oracle = acc * (t1 - t0) / (3.0 * N);
  CausalOracle oc(m);
  const double tau_num = oc.tau(v3(t0, 0, 0), v3(t1, 0, 0));
  CHECK(tau_num == doctest::Approx(tau_oracle).epsilon(1e-6));
}

TEST_CASE("cut time: flat rays have no cut inside the box") {
  auto m = make_minkowski(2);
  CausalOracle oc(m);
  const Box K = Box::centered(v3(0, 0, 0), 3.0);
  const CutResult r = cut_time(oc, v3(0, 0, 0), v3(1, 1, 0), K);
  CHECK_FALSE(r.cut_found);
  CHECK(r.rho == doctest::Approx(r.exit_s));
  CHECK(r.exit_s == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("cut time on the focusing sandwich wave matches the conjugate point") {
  auto mb = focusing_metric();
  const double s_conj = focusing_conjugate_oracle();
  REQUIRE(s_conj > 0.0);

  CausalConfig cfg;
  cfg.fan_radius = 10.0;
  cfg.fan_time = 12.0;
  CausalOracle oc(MetricPtr(mb), cfg);
  const Vec x0 = v3(-3.0, 3.0, 0.0);
  const Vec xi = v3(1.0, -1.0, 0.0);
  const Box K = Box::centered(v3(0, 0, 0), 9.0);
  const CutResult r = cut_time(oc, x0, xi, K);
  REQUIRE(r.cut_found);
  // cut point never lies beyond the first conjugate point
  CHECK(r.rho <= s_conj + 0.05);
  CHECK(std::abs(r.rho - s_conj) < 0.12);

  // cut-time symmetry: the reversed vector at the cut point has the same
  // backward cut parameter
  const Geodesic geo = integrate_geodesic(MetricPtr(mb), x0, xi, 8.0);
  const Vec y = geo.point(r.rho);
  const Vec eta = geo.tangent(r.rho);
  const CutResult rp = cut_time_past(oc, y, eta, K);
  REQUIRE(rp.cut_found);
  CHECK(std::abs(rp.rho - r.rho) < 0.12);

  // lower semi-continuity probe in the direction
  for (double eps : {2e-3, 1e-3}) {
    Vec sp = v3(1.0, -std::cos(eps), std::sin(eps));
    Vec xi2 = mb->project_null(x0, sp);
    const CutResult r2 = cut_time(oc, x0, xi2, K);
    CHECK(r2.rho >= r.rho - 0.1);
  }
}

TEST_CASE("earliest observation functions on a static observer") {
  auto m = make_minkowski(2);
  CausalOracle oc(m);
  ObserverCurve mu{[](double s) {
    Vec p(3);
    p << s, 0.0, 0.0;
    return p;
  }};
  CHECK(earliest_obs_plus(oc, mu, v3(0, 0.5, 0)) ==
        doctest::Approx(0.5).epsilon(1e-9));
  CHECK(earliest_obs_minus(oc, mu, v3(0, 0.5, 0)) ==
        doctest::Approx(-0.5).epsilon(1e-9));
  // sentinels
  CHECK(earliest_obs_plus(oc, mu, v3(5, 0, 0)) == doctest::Approx(1.0));
  CHECK(earliest_obs_minus(oc, mu, v3(5, 0, 0)) == doctest::Approx(1.0));
  CHECK(earliest_obs_plus(oc, mu, v3(-5, 0, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("observation time along a null ray is nondecreasing") {
  auto m = make_minkowski(2);
  CausalOracle oc(m);
  ObserverCurve mu{[](double s) {
    Vec p(3);
    p << 2.0 * s, 1.5, 0.0;
    return p;
  }};
  CounterRng rng{23};
  for (int ray = 0; ray < 10; ++ray) {
    const double th = rng.uniform(ray, 0, 2 * kPi);
    const Vec x0 = v3(-0.5, rng.uniform(50 + ray, -0.4, 0.4),
                      rng.uniform(90 + ray, -0.4, 0.4));
    const Vec xi = v3(1.0, std::cos(th), std::sin(th));
    const Geodesic geo = integrate_geodesic(m, x0, xi, 2.0);
    double prev = -2.0;
    for (int k = 0; k <= 20; ++k) {
      const double f = earliest_obs_plus(oc, mu, geo.point(2.0 * k / 20));
      CHECK(f >= prev - 1e-9);
      prev = f;
    }
  }
}
