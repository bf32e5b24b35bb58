// Gaussian beams: values, eikonal structure, semi-analytic wave-operator
// residuals cross-checked against literal finite differences, and frequency
// scaling of residual and source norms.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gbeam/beam.hpp"
#include "gbeam/util.hpp"

using namespace gbeam;

namespace {
Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

MetricPtr bump_metric() {
  return make_conformal(
      2, ScalarField::gaussian_bump(1.0, 0.3, v3(0.5, 0.3, 0.0), 0.8));
}
}  // namespace

TEST_CASE("flat beam peak amplitude and Gaussian transverse profile") {
  BeamOptions opt;
  opt.lambda = 40.0;
  opt.delta_prime = 2.0;
  auto m = make_minkowski(2);
  const GaussianBeam beam(m, v3(0, 0, 0), v3(1, 1, 0), 0.0, 1.2, opt);

  // |a0(1)| = |1 * (1+2i)|^{-1/2} = 5^{-1/4}
  const cplx peak = beam.value(v3(1, 1, 0));
  CHECK(std::abs(std::abs(peak) - std::pow(5.0, -0.25)) < 1e-9);

  // transverse profile: |U| = |a0| exp(-lambda Im H_22 t^2), Im H_22(1) = 1/5
  for (double t : {0.05, 0.1, 0.2}) {
    const cplx u = beam.value(v3(1, 1, t));
    const double expect =
        std::pow(5.0, -0.25) * std::exp(-40.0 * t * t / 5.0);
    CHECK(std::abs(u) == doctest::Approx(expect).epsilon(1e-6));
  }

  // outside the cutoff tube the beam vanishes identically
  CHECK(std::abs(beam.value(v3(1, 1, 2.5))) == 0.0);
  CHECK(std::abs(beam.value(v3(9, 9, 0))) == 0.0);
}

TEST_CASE("eikonal defect in the flat chart has the cubic closed form") {
  BeamOptions opt;
  opt.lambda = 40.0;
  opt.delta_prime = 2.0;
  auto m = make_minkowski(2);
  const GaussianBeam beam(m, v3(0, 0, 0), v3(1, 1, 0), 0.0, 1.2, opt);

  CounterRng rng{53};
  for (int t = 0; t < 6; ++t) {
    const double s = rng.uniform(t, 0.1, 1.1);
    const Vec y = v2(rng.uniform(20 + t, -0.3, 0.3),
                     rng.uniform(40 + t, -0.3, 0.3));
    const CVec d = beam.dphase(s, y);
    // flat chart: G^{-1} is the normal form
    const cplx eik = 2.0 * d(0) * d(1) + d(2) * d(2);
    const CMat H = beam.riccati().Hat(s);
    const cplx hy1 = H(0, 0) * y(0) + H(0, 1) * y(1);
    const cplx hy2 = H(1, 0) * y(0) + H(1, 1) * y(1);
    const cplx closed = -8.0 * hy1 * hy2 * hy2;
    CHECK(std::abs(eik - closed) < 1e-10);
  }
}

TEST_CASE("transport equation holds on the axis of a curved chart") {
  BeamOptions opt;
  opt.delta_prime = 2.0;
  auto m = bump_metric();
  GaussianBeam beam(m, v3(-1, -1, 0), m->project_null(v3(-1, -1, 0), v3(1, 1, 0)),
                    0.0, 2.0, opt);
  const Vec y0 = Vec::Zero(2);
  for (double s : {0.5, 1.0, 1.5}) {
    beam.set_lambda(40.0);
    const cplx b40 = beam.box_chart(s, y0);
    beam.set_lambda(80.0);
    const cplx b80 = beam.box_chart(s, y0);
    // the O(lambda) coefficient is the transport defect; it must vanish
    CHECK(std::abs(b80 - b40) / 40.0 < 1e-5);
  }
}

TEST_CASE("semi-analytic wave operator matches literal finite differences") {
  for (double lambda : {5.0, 10.0}) {
    BeamOptions opt;
    opt.lambda = lambda;
    opt.delta_prime = 2.0;

    {  // flat background
      auto m = make_minkowski(2);
      const GaussianBeam beam(m, v3(0, 0, 0), v3(1, 1, 0), 0.0, 1.2, opt);
      auto field = [&](const Vec& x) { return beam.value(x); };
      for (auto [s, y1, y2] : {std::tuple{0.6, 0.05, -0.08},
                               std::tuple{0.9, -0.12, 0.1},
                               std::tuple{1.05, 0.0, 0.15}}) {
        const Vec y = v2(y1, y2);
        const cplx semi = beam.box_chart(s, y);
        const Vec x = beam.chart().to_manifold(s, y);
        const cplx fd = laplace_beltrami_fd(m, field, x, 1e-3);
        CHECK(std::abs(semi - fd) < 3e-3 * (1.0 + std::abs(semi)));
      }
    }
    {  // curved background
      auto m = bump_metric();
      const GaussianBeam beam(
          m, v3(-1, -1, 0), m->project_null(v3(-1, -1, 0), v3(1, 1, 0)), 0.0,
          2.0, opt);
      auto field = [&](const Vec& x) { return beam.value(x); };
      for (auto [s, y1, y2] :
           {std::tuple{0.8, 0.06, -0.05}, std::tuple{1.4, -0.1, 0.08}}) {
        const Vec y = v2(y1, y2);
        const cplx semi = beam.box_chart(s, y);
        const Vec x = beam.chart().to_manifold(s, y);
        const cplx fd = laplace_beltrami_fd(m, field, x, 1e-3);
        CHECK(std::abs(semi - fd) < 6e-3 * (1.0 + std::abs(semi)));
      }
    }
  }
}

TEST_CASE("residual norm is flat in lambda on the flat background") {
  BeamOptions opt;
  opt.delta_prime = 2.0;
  auto m = make_minkowski(2);
  GaussianBeam beam(m, v3(0, 0, 0), v3(1, 1, 0), 0.0, 1.2, opt);
  const std::vector<double> lambdas = {40, 60, 90, 135};
  std::vector<double> norms;
  for (double l : lambdas) {
    beam.set_lambda(l);
    norms.push_back(beam_residual_norm(beam, 50, 64));
  }
  const double slope = loglog_slope(lambdas, norms);
  CHECK(std::abs(slope - 0.0) < 0.1);
  // sanity: the norms themselves are O(1), not tiny or huge
  for (double nv : norms) {
    CHECK(nv > 1e-3);
    CHECK(nv < 1e2);
  }
}

TEST_CASE("residual norm scaling survives curvature") {
  BeamOptions opt;
  opt.delta_prime = 2.0;
  auto m = bump_metric();
  GaussianBeam beam(m, v3(-1, -1, 0),
                    m->project_null(v3(-1, -1, 0), v3(1, 1, 0)), 0.0, 1.6,
                    opt);
  const std::vector<double> lambdas = {40, 60, 90, 135};
  std::vector<double> norms;
  for (double l : lambdas) {
    beam.set_lambda(l);
    norms.push_back(beam_residual_norm(beam, 50, 64));
  }
  const double slope = loglog_slope(lambdas, norms);
  CHECK(std::abs(slope - 0.0) < 0.3);
}

TEST_CASE("windowed source norm scales like lambda^(1 - n/4)") {
  BeamOptions opt;
  opt.delta_prime = 2.0;
  auto m = make_minkowski(2);
  GaussianBeam beam(m, v3(0, 0, 0), v3(1, 1, 0), 0.0, 2.0, opt);
  SourceWindow w;
  w.zm_a = 0.8;
  w.zm_b = 1.2;
  w.zp_a = 0.6;
  w.zp_b = 1.4;
  w.zp_pad = 0.2;
  const std::vector<double> lambdas = {40, 60, 90, 135};
  std::vector<double> norms;
  for (double l : lambdas) {
    beam.set_lambda(l);
    norms.push_back(source_norm(beam, w, 100, 64));
  }
  const double slope = loglog_slope(lambdas, norms);
  // n = 2: commutator-dominated scaling 1 - n/4 = 1/2
  CHECK(std::abs(slope - 0.5) < 0.15);
}
