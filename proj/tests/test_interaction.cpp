// Four-beam interaction machinery: span coefficients of null direction
// quadruples, completion of a direction triple inside a cone neighbourhood,
// the combined complex phase and its nondegenerate critical point, the
// shrinking-box stationary-phase sweep against Gaussian closed forms, and
// the semilinear / quasilinear interaction data with their predicted limits.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include "gbeam/beam.hpp"
#include "gbeam/fermi.hpp"
#include "gbeam/interaction.hpp"
#include "gbeam/manifold.hpp"
#include "gbeam/util.hpp"

using namespace gbeam;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// canonical quadruple of future null directions in 2+1 Minkowski whose only
// span relation is xi0 - xi1 - xi2 + xi3 = 0
std::vector<Vec> canonical_xi() {
  return {v3(1, 0, -1), v3(1, 1, 0), v3(1, -1, 0), v3(1, 0, 1)};
}

Vec canonical_kappa() {
  Vec k(4);
  k << 1, -1, -1, 1;
  return k;
}

InteractionBeams canonical_interaction() {
  InteractionConfig cfg;
  cfg.m = make_minkowski(2);
  cfg.y = v3(0, 0, 0);
  cfg.xi = canonical_xi();
  cfg.kappa = canonical_kappa();
  return make_interaction(cfg);
}

SweepOptions test_sweep() {
  SweepOptions sw;
  sw.pts_per_dim = 40;  // keeps the quadrature error well below the
                        // extrapolation error at unit-test cost
  return sw;
}

}  // namespace

// ---------------------------------------------------------------------------
// span coefficients
// ---------------------------------------------------------------------------

TEST_CASE("span coefficients: canonical quadruple, independence, rejects") {
  const auto xi = canonical_xi();

  const SpanResult sr = span_coefficients(xi);
  CHECK_FALSE(sr.independent);
  REQUIRE(sr.kappa.size() == 4);
  // normalized so kappa(0) = 1; the unique relation is (1, -1, -1, 1)
  CHECK(std::abs(sr.kappa(0) - 1.0) < 1e-12);
  CHECK(std::abs(sr.kappa(1) + 1.0) < 1e-10);
  CHECK(std::abs(sr.kappa(2) + 1.0) < 1e-10);
  CHECK(std::abs(sr.kappa(3) - 1.0) < 1e-10);
  Vec combo = Vec::Zero(3);
  for (int j = 0; j < 4; ++j) combo += sr.kappa(j) * xi[j];
  CHECK(combo.norm() < 1e-10);
  CHECK(sr.residual < 1e-10);

  // any three pairwise nonproportional null directions are independent
  const SpanResult tri = span_coefficients({xi[1], xi[2], xi[3]});
  CHECK(tri.independent);

  // a proportional pair is degenerate
  CHECK_THROWS(span_coefficients({2.0 * xi[1], xi[1], xi[2], xi[3]}));
}

TEST_CASE("span coefficients: random null quadruples have all-nonzero kappa") {
  CounterRng rng(611u);
  std::uint64_t ctr = 0;
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Vec> xi;
    std::vector<double> angles;
    while (xi.size() < 4) {
      const double th = 2.0 * kPi * rng.uniform(ctr++);
      bool close = false;
      for (double a : angles)
        if (std::abs(std::remainder(th - a, 2.0 * kPi)) < 1e-2) close = true;
      if (close) continue;
      angles.push_back(th);
      const double scale = 0.5 + 2.0 * rng.uniform(ctr++);
      xi.push_back(scale * v3(1.0, std::cos(th), std::sin(th)));
    }
    const SpanResult sr = span_coefficients(xi);
    REQUIRE_FALSE(sr.independent);
    double maxnorm = 0.0;
    for (const Vec& v : xi) maxnorm = std::max(maxnorm, v.norm());
    Vec combo = Vec::Zero(3);
    for (int j = 0; j < 4; ++j) combo += sr.kappa(j) * xi[j];
    CHECK(combo.norm() < 1e-10 * maxnorm);
    // every three-subset is independent, so no coefficient can vanish
    const double kmax = sr.kappa.cwiseAbs().maxCoeff();
    for (int j = 0; j < 4; ++j) CHECK(std::abs(sr.kappa(j)) > 1e-8 * kmax);
  }
}

TEST_CASE("completing a null triple that spans a given covector direction") {
  auto m = make_minkowski(2);
  const Vec y = v3(0, 0, 0);
  const Vec xi1 = v3(1, 1, 0);

  SUBCASE("generic direction inside the cone neighbourhood") {
    const Vec eta = v3(1, 0, -1);
    const double r_U = 0.5;
    const auto [xi2, xi3] = complete_span_directions(m, y, xi1, eta, r_U);

    for (const Vec& v : {xi2, xi3}) {
      CHECK(std::abs(m->inner(y, v, v)) < 1e-9);  // null
      CHECK(v(0) > 0.0);                          // future
      const double cosang =
          xi1.dot(v) / (xi1.norm() * v.norm());
      CHECK(std::acos(std::min(1.0, cosang)) <= r_U + 1e-9);
    }

    // eta really lies in the span: the quadruple {eta, xi1, xi2, xi3} is
    // dependent with nonzero leading coefficient
    const SpanResult sr = span_coefficients({eta, xi1, xi2, xi3});
    CHECK_FALSE(sr.independent);
    CHECK(std::abs(sr.kappa(0) - 1.0) < 1e-12);
    CHECK(sr.residual < 1e-8);
  }

  SUBCASE("eta on the beam axis is trivially spanned") {
    const auto [xi2, xi3] = complete_span_directions(m, y, xi1, xi1, 0.3);
    CHECK(std::abs(m->inner(y, xi2, xi2)) < 1e-9);
    CHECK(std::abs(m->inner(y, xi3, xi3)) < 1e-9);
    CHECK(xi2(0) > 0.0);
    CHECK(xi3(0) > 0.0);
  }

  SUBCASE("spacelike eta is rejected") {
    CHECK_THROWS(complete_span_directions(m, y, xi1, v3(0, 1, 0), 0.5));
  }
}

// ---------------------------------------------------------------------------
// Riccati data pinned at an interior parameter
// ---------------------------------------------------------------------------

TEST_CASE("Riccati solution pinned at an interior parameter") {
  SUBCASE("flat chart matches the closed form on both sides") {
    auto m = make_minkowski(2);
    const Geodesic g =
        integrate_bidirectional(m, v3(0, 0, 0), v3(1, 1, 0), -1.0, 1.0);
    const FermiChart chart(m, g, -1.0, 1.0);
    const CMat Y0 = CMat::Identity(2, 2);
    const CMat Z0 = cplx(0, 1) * CMat::Identity(2, 2);
    const RiccatiSolution ric = solve_riccati_from(chart, -1.0, 1.0, 0.0, Y0, Z0);

    for (double s : {-0.7, -0.2, 0.35, 0.9}) {
      CMat Yref = CMat::Identity(2, 2);
      Yref(1, 1) = cplx(1.0, 2.0 * s);  // Y = diag(1, 1 + 2 i s)
      CHECK((ric.Yat(s) - Yref).cwiseAbs().maxCoeff() < 1e-9);
      // conserved: det(Im H) |det Y|^2 = det(Im H_0) = 1
      CHECK(std::abs(ric.det_imH(s) *
                         std::norm(cplx(ric.Yat(s).determinant())) -
                     1.0) < 1e-8);
    }
    // amplitude is exactly 1 at the pinned parameter
    CHECK(std::abs(ric.amp(0.0) - cplx(1, 0)) < 1e-12);
  }

  SUBCASE("curved chart conserves det Im H |det Y|^2 across the pin") {
    auto m = make_conformal(
        2, ScalarField::gaussian_bump(1.0, 0.25, v3(0.3, 0.2, 0.1), 0.7));
    const Geodesic g =
        integrate_bidirectional(m, v3(0, 0, 0), v3(1, 1, 0), -1.2, 1.2);
    const FermiChart chart(m, g, -1.2, 1.2);
    const CMat Y0 = CMat::Identity(2, 2);
    const CMat Z0 = cplx(0, 1) * CMat::Identity(2, 2);
    const RiccatiSolution ric =
        solve_riccati_from(chart, -1.2, 1.2, 0.0, Y0, Z0);

    CHECK(std::abs(ric.det_imH0 - 1.0) < 1e-12);
    CHECK(ric.min_im_eig() > 0.0);
    for (double s : {-1.1, -0.6, -0.1, 0.4, 1.0}) {
      const double det_y2 = std::norm(cplx(ric.Yat(s).determinant()));
      CHECK(ric.det_imH(s) * det_y2 == doctest::Approx(1.0).epsilon(1e-6));
    }
    // amplitude is continuous across the pin (backward and forward legs)
    const cplx am = ric.amp(-1e-4), ap = ric.amp(1e-4);
    CHECK(std::abs(am - ap) < 1e-3);
    CHECK(std::abs(ric.amp(0.0) - cplx(1, 0)) < 1e-12);
  }
}

// ---------------------------------------------------------------------------
// combined phase
// ---------------------------------------------------------------------------

TEST_CASE("combined phase has a nondegenerate critical point at the meeting "
          "point") {
  const InteractionBeams ib = canonical_interaction();

  // each beam carries value 1 and phase Hessian i I at the meeting point
  for (const auto& b : ib.beams) {
    CHECK(std::abs(b->value(ib.y) - cplx(1, 0)) < 1e-10);
  }

  const CombinedPhase& ph = *ib.phase;
  CHECK(std::abs(ph.S_at_y()) < 1e-10);
  CHECK(ph.grad_norm_at_y() < 1e-8);
  CHECK(ph.min_im_eig() > 0.0);

  // for this symmetric quadruple Q = 2 i (P0+P1+P2+P3) = 8 i I
  const CMat Q = ph.Q();
  CHECK((Q.imag() - 8.0 * Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 2e-5);
  CHECK(Q.real().cwiseAbs().maxCoeff() < 1e-5 * Q.imag().norm());

  // Im S grows quadratically away from the critical point
  const double ge = ph.growth_exponent();
  CHECK(ge == doctest::Approx(2.0).epsilon(0.1));

  // dropping one beam destroys the critical point: the gradient of the
  // remaining sum is the metric image of kappa0 xi0 + kappa1 xi1 + kappa2 xi2
  std::vector<std::shared_ptr<const GaussianBeam>> three(ib.beams.begin(),
                                                         ib.beams.begin() + 3);
  Vec k3(3);
  k3 << ib.kappa(0), ib.kappa(1), ib.kappa(2);
  const CombinedPhase ph3(three, k3, ib.y);
  CHECK(ph3.grad_norm_at_y() > 0.5);
  CHECK(ph3.grad_norm_at_y() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-4));
}

// ---------------------------------------------------------------------------
// stationary phase sweep
// ---------------------------------------------------------------------------

TEST_CASE("stationary phase sweep against Gaussian closed forms") {
  const Vec y0 = Vec::Zero(3);
  auto Sgauss = [](const Vec& x) { return cplx(0.0, x.squaredNorm()); };
  const std::vector<double> lams = {40, 60, 90, 135};
  const double pi32 = std::pow(kPi, 1.5);

  SUBCASE("F = 1: limit is pi^{3/2} with no lambda correction") {
    auto F = [](const Vec&) { return cplx(1.0, 0.0); };
    const PhaseLimitResult r = stationary_phase_limit(Sgauss, F, y0, lams, 40);
    CHECK(std::abs(r.C0 - cplx(pi32, 0)) < 1e-8);
    CHECK(std::abs(r.closed_form - cplx(pi32, 0)) < 1e-8);
    for (cplx v : r.scaled) CHECK(std::abs(v - pi32) < 1e-4 * pi32);
    CHECK(std::abs(r.limit - pi32) < 1e-4 * pi32);
  }

  SUBCASE("F = 1 + |x|: each scaled value is pi^{3/2} + 2 pi lambda^{-1/2}") {
    auto F = [](const Vec& x) { return cplx(1.0 + x.norm(), 0.0); };
    const PhaseLimitResult r = stationary_phase_limit(Sgauss, F, y0, lams, 40);
    for (size_t i = 0; i < lams.size(); ++i) {
      const double oracle = pi32 + 2.0 * kPi / std::sqrt(lams[i]);
      CHECK(std::abs(r.scaled[i] - oracle) < 1e-3 * oracle);
    }
    // Richardson removes the half-power term exactly
    CHECK(std::abs(r.limit - pi32) < 2e-3 * pi32);
    CHECK(std::abs(r.limit - r.closed_form) < 3.0 * r.err + 1e-3 * pi32);
  }

  SUBCASE("F vanishing at the critical point decays at the half power") {
    auto F = [](const Vec& x) { return cplx(x.norm(), 0.0); };
    const PhaseLimitResult r = stationary_phase_limit(Sgauss, F, y0, lams, 40);
    std::vector<double> mags;
    for (cplx v : r.scaled) mags.push_back(std::abs(v));
    const double slope = loglog_slope(lams, mags);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.05));
    CHECK(std::abs(r.limit) < 1e-2 * mags.front());
  }

  SUBCASE("a gradient at the base point kills the limit beyond any power") {
    auto Slin = [](const Vec& x) {
      return cplx(0.5 * x(0), x.squaredNorm());
    };
    auto F = [](const Vec&) { return cplx(1.0, 0.0); };
    const PhaseLimitResult r = stationary_phase_limit(Slin, F, y0, lams, 64);
    // oracle: scaled value = pi^{3/2} exp(-lambda/16)
    for (size_t i = 0; i < lams.size(); ++i) {
      const double oracle = pi32 * std::exp(-lams[i] / 16.0);
      CHECK(std::abs(r.scaled[i]) < 2.0 * oracle + 1e-9);
    }
    const double drop = std::abs(r.scaled.back()) /
                        std::max(std::abs(r.scaled.front()), 1e-300);
    CHECK(drop < std::pow(lams.front() / lams.back(), 3.0));
  }

  SUBCASE("an indefinite imaginary Hessian is rejected") {
    auto Sbad = [](const Vec& x) {
      return cplx(0.0, x(0) * x(0) + x(1) * x(1) - 3.0 * x(2) * x(2));
    };
    auto F = [](const Vec&) { return cplx(1.0, 0.0); };
    CHECK_THROWS(stationary_phase_limit(Sbad, F, y0, {40.0, 60.0}, 16));
  }
}

// ---------------------------------------------------------------------------
// semilinear datum
// ---------------------------------------------------------------------------

TEST_CASE("semilinear datum: sweep matches prediction, reduction and "
          "conjugation symmetry") {
  const InteractionBeams ib = canonical_interaction();

  DSemiOptions opt;
  opt.sweep = test_sweep();
  const DSemiResult r = eval_D_semi(ib, opt);

  REQUIRE(r.lambdas.size() == 4);
  CHECK(r.predicted != 0.0);

  // the sweep limit reproduces the Hessian closed form within 5%
  CHECK(std::abs(r.value - r.predicted) < 0.05 * std::abs(r.predicted));

  // the sixteen-term product agrees with its two-term reduction within the
  // extrapolation error bars, per lambda and in the limit
  const double floor = 1e-6 * std::abs(r.predicted);
  CHECK(std::abs(r.full_terms.back() - r.reduced.back()) <
        3.0 * r.extrap_err + floor);
  CHECK(std::abs(r.value - r.reduction) < 3.0 * r.extrap_err + floor);

  // -m! normalization of the full datum
  CHECK(r.full_datum == doctest::Approx(-6.0 * r.value));

  // independent cross-check of the closed form: the quadrature sweep of
  // e^{i lambda S} alone reproduces C0
  auto Sfun = [&](const Vec& x) { return ib.phase->S(x); };
  auto Fone = [](const Vec&) { return cplx(1.0, 0.0); };
  const PhaseLimitResult sp =
      stationary_phase_limit(Sfun, Fone, ib.y, {40, 60, 90, 135}, 40);
  CHECK(std::abs(0.125 * sp.limit.real() - r.predicted) <
        0.02 * std::abs(r.predicted));

  // flipping every kappa conjugates the integrand: real parts are unchanged
  InteractionConfig cfg2;
  cfg2.m = ib.m;
  cfg2.y = ib.y;
  cfg2.xi = canonical_xi();
  cfg2.kappa = -canonical_kappa();
  const InteractionBeams ib2 = make_interaction(cfg2);
  const DSemiResult r2 = eval_D_semi(ib2, opt);
  for (size_t i = 0; i < r.full_terms.size(); ++i) {
    CHECK(std::abs(r2.full_terms[i] - r.full_terms[i]) <
          1e-10 * std::abs(r.full_terms[i]));
    CHECK(std::abs(r2.reduced[i] - r.reduced[i]) <
          1e-10 * std::abs(r.reduced[i]));
  }
  CHECK(std::abs(r2.predicted - r.predicted) < 1e-8 * std::abs(r.predicted));
}

TEST_CASE("semilinear datum: off-point beams, causal windows and probe "
          "powers") {
  const InteractionBeams on_point = canonical_interaction();
  DSemiOptions opt;
  opt.sweep = test_sweep();
  const DSemiResult base = eval_D_semi(on_point, opt);

  SUBCASE("beams that miss the common point give a decaying sweep") {
    InteractionConfig cfg;
    cfg.m = on_point.m;
    cfg.y = on_point.y;
    cfg.xi = canonical_xi();
    cfg.kappa = canonical_kappa();
    cfg.centers = {v3(0, 0, 0), v3(0, 0, 0), v3(0, 0, 0), v3(0, 0.3, 0)};
    const InteractionBeams off = make_interaction(cfg);
    const DSemiResult r = eval_D_semi(off, opt);
    CHECK(std::abs(r.full_terms.back()) <  0.25 * std::abs(r.full_terms.front()));
    CHECK(std::abs(r.full_terms.back()) < 0.1 * std::abs(base.value));
  }

  SUBCASE("a window that vanishes on the box zeroes the datum exactly") {
    DSemiOptions wopt = opt;
    wopt.windows.resize(4);
    wopt.windows[1] = [](const Vec& x) { return x(0) > -10.0 ? 0.0 : 1.0; };
    const DSemiResult r = eval_D_semi(on_point, wopt);
    for (double v : r.full_terms) CHECK(v == 0.0);
    for (double v : r.reduced) CHECK(v == 0.0);
    CHECK(r.value == 0.0);
  }

  SUBCASE("probe powers enter through u_f(y)^{m-3}") {
    DSemiOptions popt = opt;
    popt.m = 5;
    popt.u_f = [](const Vec& x) { return 2.0 + x(1); };
    const DSemiResult r = eval_D_semi(on_point, popt);
    CHECK(r.u_f_at_y == doctest::Approx(2.0));
    CHECK(r.predicted == doctest::Approx(4.0 * base.predicted).epsilon(1e-9));
    CHECK(std::abs(r.value - r.predicted) < 0.07 * std::abs(r.predicted));
    CHECK(r.full_datum == doctest::Approx(-120.0 * r.value));
  }

  SUBCASE("a probe vanishing at the meeting point kills the limit") {
    DSemiOptions popt = opt;
    popt.m = 5;
    popt.u_f = [](const Vec& x) { return x(1); };
    const DSemiResult r = eval_D_semi(on_point, popt);
    CHECK(std::abs(r.value) < 0.02 * std::abs(base.predicted));
  }
}

// ---------------------------------------------------------------------------
// quasilinear datum
// ---------------------------------------------------------------------------

TEST_CASE("quasilinear datum: group limits, degenerate h, and the "
          "kappa-square law") {
  const InteractionBeams ib = canonical_interaction();

  DQuasiOptions opt;
  opt.sweep = test_sweep();
  opt.h = [](const Vec&) { return Mat::Identity(3, 3).eval(); };
  const DQuasiResult r = eval_D_quasi(ib, opt);

  // h(gdot0, gdot0) = 1 + 0 + 1 = 2 for gdot0 = (1, 0, -1)
  CHECK(r.h_dot == doctest::Approx(2.0));
  CHECK(r.predicted == doctest::Approx(2.0 * r.predicted_group_h));

  // the h group carries the limit; the trace group dies at the half power
  CHECK(std::abs(r.group_h_limit - r.predicted_group_h) <
        0.07 * std::abs(r.predicted_group_h));
  CHECK(std::abs(r.group_trace_limit) < 0.1 * std::abs(r.group_h_limit));
  for (double v : r.group_source) CHECK(v == 0.0);  // no sources supplied

  // combined datum against its closed form, with matching sign
  CHECK(std::abs(r.value - r.predicted) < 0.07 * std::abs(r.predicted));
  CHECK(r.value * r.h_dot * r.predicted_group_h > 0.0);

  SUBCASE("h = g is annihilated: null directions carry no datum") {
    DQuasiOptions gopt = opt;
    gopt.h = [&](const Vec& x) { return ib.m->metric_at(x); };
    const DQuasiResult rg = eval_D_quasi(ib, gopt);
    CHECK(std::abs(rg.h_dot) < 1e-12);
    CHECK(std::abs(rg.predicted) < 1e-12);
    CHECK(std::abs(rg.value) <
          3.0 * rg.extrap_err + 0.02 * std::abs(r.predicted));
  }

  SUBCASE("normalized limits follow the kappa_0-square law") {
    InteractionConfig cfg;
    cfg.m = ib.m;
    cfg.y = ib.y;
    cfg.xi = canonical_xi();
    cfg.kappa = 2.0 * canonical_kappa();
    const InteractionBeams ib2 = make_interaction(cfg);
    // doubled kappa doubles the effective frequency |kappa_j| lambda, so the
    // quadrature needs a denser grid to stay below the aliasing threshold
    DQuasiOptions opt2 = opt;
    opt2.sweep.pts_per_dim = 64;
    const DQuasiResult r2 = eval_D_quasi(ib2, opt2);

    // both runs match their own closed form, so the ratio of the limits
    // normalized by Re C0 h(gdot0,gdot0) is exactly kappa_0^2 = 4
    const double n1 = r.value / (r.C0.real() * r.h_dot);
    const double n2 = r2.value / (r2.C0.real() * r2.h_dot);
    CHECK(n2 / n1 == doctest::Approx(4.0).epsilon(0.10));

    // the raw limits scale like kappa^2 C0(kappa), i.e. by sqrt(2) here
    CHECK(r2.value / r.value ==
          doctest::Approx(std::sqrt(2.0)).epsilon(0.10));
  }
}
