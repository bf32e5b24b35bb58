#include "gbeam/beam.hpp"

#include <cmath>
#include <stdexcept>

namespace gbeam {

namespace {

cplx quad_form(const CMat& H, const Vec& y) {
  cplx acc(0, 0);
  for (int i = 0; i < y.size(); ++i)
    for (int j = 0; j < y.size(); ++j) acc += y(i) * H(i, j) * y(j);
  return acc;
}

double sstep_d1(double t, double a, double b) {
  const double h = 1e-6 * (b - a);
  return (smoothstep_cinf(t + h, a, b) - smoothstep_cinf(t - h, a, b)) /
         (2 * h);
}

// ---- internal evaluator: semi-analytic wave operator on chart slices ------

struct Row {
  FermiChart::Slice sl[3];  // at (s-, s, s+) with clamped shifts
  CMat H[3], Hpr[3];
  cplx a0[3], a0d[3];
  double lambda = 0.0;
};

Row make_row(const GaussianBeam& b, double s, double h) {
  const FermiChart& ch = b.chart();
  const RiccatiSolution& ric = b.riccati();
  Row r;
  const double sm = std::max(s - h, ch.s0());
  const double sp = std::min(s + h, ch.s1());
  const double sv[3] = {sm, s, sp};
  for (int k = 0; k < 3; ++k) {
    r.sl[k] = ch.slice(sv[k]);
    r.H[k] = ric.Hat(sv[k]);
    r.Hpr[k] = ric.Hprime(sv[k]);
    r.a0[k] = ric.amp(sv[k]);
    r.a0d[k] = ric.amp_deriv(sv[k]);
  }
  r.lambda = b.options().lambda;
  return r;
}

struct Node {
  Mat Ginv;
  double sqg = 0.0;
  CVec dphi, dA;
  cplx A{0, 0};
  double t0 = 0.0;  // ambient time coordinate of the node
  Vec J0;           // dx^0/d(s,y)
};

Node node_at(const GaussianBeam& b, const Row& r, int k, const Vec& y) {
  const FermiChart& ch = b.chart();
  const int n = ch.n();
  Node nd;
  const Vec x = ch.to_manifold(r.sl[k], y);
  const Mat J = ch.jacobian(r.sl[k], y);
  const Mat G = J.transpose() * b.metric()->metric_at(x) * J;
  nd.Ginv = G.inverse();
  nd.sqg = std::sqrt(std::abs(G.determinant()));
  nd.t0 = x(0);
  nd.J0 = J.row(0);

  nd.dphi = CVec(n + 1);
  nd.dphi(0) = quad_form(r.Hpr[k], y);
  for (int j = 0; j < n; ++j) {
    cplx hy(0, 0);
    for (int l = 0; l < n; ++l) hy += r.H[k](j, l) * y(l);
    nd.dphi(1 + j) = (j == 0 ? 1.0 : 0.0) + 2.0 * hy;
  }

  const double dp = b.options().delta_prime;
  const double rr = y.norm();
  const double chi = b.cutoff(rr);
  const double chid = (rr < 1e-14)
                          ? 0.0
                          : sstep_d1(rr, 0.5 * dp, dp);
  nd.A = r.a0[k] * chi;
  nd.dA = CVec(n + 1);
  nd.dA(0) = r.a0d[k] * chi;
  for (int j = 0; j < n; ++j)
    nd.dA(1 + j) = r.a0[k] * chid * (rr < 1e-14 ? 0.0 : y(j) / rr);
  return nd;
}

// box U plus (optionally) the fields needed for the windowed source
struct BoxOut {
  cplx boxU{0, 0};
  cplx U{0, 0};
  CVec dU;      // chart-coordinate gradient of U
  Node center;
};

BoxOut box_at(const GaussianBeam& b, const Row& r, const Vec& y, double h) {
  const int n = b.chart().n();
  const double lam = r.lambda;
  BoxOut out;
  const Node c = node_at(b, r, 1, y);

  // flux divergences for box(phi) and box(A)
  cplx divphi(0, 0), divA(0, 0);
  auto flux = [&](const Node& nd, int a, cplx& fphi, cplx& fA) {
    cplx accp(0, 0), accA(0, 0);
    for (int bcol = 0; bcol <= n; ++bcol) {
      accp += nd.Ginv(a, bcol) * nd.dphi(bcol);
      accA += nd.Ginv(a, bcol) * nd.dA(bcol);
    }
    fphi = nd.sqg * accp;
    fA = nd.sqg * accA;
  };
  {  // s-direction: slices at clamped s +/- h
    const Node nm = node_at(b, r, 0, y);
    const Node np = node_at(b, r, 2, y);
    const double spread = r.sl[2].s - r.sl[0].s;
    cplx fpm, fAm, fpp, fAp;
    flux(nm, 0, fpm, fAm);
    flux(np, 0, fpp, fAp);
    divphi += (fpp - fpm) / spread;
    divA += (fAp - fAm) / spread;
  }
  for (int j = 0; j < n; ++j) {
    Vec yp = y, ym = y;
    yp(j) += h;
    ym(j) -= h;
    const Node np = node_at(b, r, 1, yp);
    const Node nm = node_at(b, r, 1, ym);
    cplx fpm, fAm, fpp, fAp;
    flux(nm, 1 + j, fpm, fAm);
    flux(np, 1 + j, fpp, fAp);
    divphi += (fpp - fpm) / (2 * h);
    divA += (fAp - fAm) / (2 * h);
  }
  const cplx boxphi = divphi / c.sqg;
  const cplx boxA = divA / c.sqg;

  cplx eik(0, 0), cross(0, 0);
  for (int a = 0; a <= n; ++a)
    for (int bcol = 0; bcol <= n; ++bcol) {
      eik += c.dphi(a) * c.Ginv(a, bcol) * c.dphi(bcol);
      cross += c.dphi(a) * c.Ginv(a, bcol) * c.dA(bcol);
    }

  const cplx phi = cplx(y.size() ? y(0) : 0.0, 0.0) + quad_form(r.H[1], y);
  const cplx osc = std::exp(cplx(0, 1) * lam * phi);
  out.boxU = osc * (-lam * lam * eik * c.A +
                    cplx(0, 1) * lam * (2.0 * cross + boxphi * c.A) + boxA);
  out.U = osc * c.A;
  out.dU = CVec(n + 1);
  for (int a = 0; a <= n; ++a)
    out.dU(a) = osc * (cplx(0, 1) * lam * c.dphi(a) * c.A + c.dA(a));
  out.center = c;
  return out;
}

}  // namespace

// ----------------------------------------------------------------- beam -----

GaussianBeam::GaussianBeam(MetricPtr m, const Vec& x0, const Vec& xi0,
                           double s0, double s1, BeamOptions opt)
    : m_(std::move(m)), opt_(opt) {
  GeoOptions gopt;
  gopt.renull = true;
  gopt.h_max = 0.25;
  const double pad = 0.1;
  const Geodesic geo = integrate_bidirectional(
      m_, x0, xi0, std::min(s0 - pad, 0.0), std::max(s1 + pad, 0.0), gopt);
  chart_ = std::make_shared<FermiChart>(m_, geo, s0, s1, opt_.chart_ds);
  const int n = m_->n;
  const CMat Y0 = CMat::Identity(n, n);
  const CMat Z0 = cplx(0, 1) * CMat::Identity(n, n);
  if (std::isnan(opt_.riccati_init_s)) {
    ric_ = solve_riccati(*chart_, s0, s1, Y0, Z0, opt_.riccati_h);
  } else {
    ric_ = solve_riccati_from(*chart_, s0, s1, opt_.riccati_init_s, Y0, Z0,
                              opt_.riccati_h);
  }

  if (chart_->affine()) {
    affine_ = true;
    aff_P_ = chart_->axis().point(s0);
    Mat Q(m_->dim, m_->dim);
    const Mat E = chart_->frame(s0);
    Q.col(0) = chart_->axis().tangent(s0);
    for (int i = 0; i < n; ++i) Q.col(1 + i) = E.col(1 + i);
    aff_Qinv_ = Q.inverse();
  } else {
    const double step = std::min(0.25, (s1 - s0) / 8.0);
    for (double s = s0; s <= s1 + 1e-12; s += step)
      seeds_.emplace_back(s, chart_->axis().point(s));
  }
}

double GaussianBeam::cutoff(double r) const {
  return smoothstep_cinf(r, 0.5 * opt_.delta_prime, opt_.delta_prime);
}

cplx GaussianBeam::phase(double s, const Vec& y) const {
  return cplx(y(0), 0.0) + quad_form(ric_.Hat(s), y);
}

CVec GaussianBeam::dphase(double s, const Vec& y) const {
  const int n = chart_->n();
  const CMat H = ric_.Hat(s);
  const CMat Hp = ric_.Hprime(s);
  CVec d(n + 1);
  d(0) = quad_form(Hp, y);
  for (int j = 0; j < n; ++j) {
    cplx hy(0, 0);
    for (int l = 0; l < n; ++l) hy += H(j, l) * y(l);
    d(1 + j) = (j == 0 ? 1.0 : 0.0) + 2.0 * hy;
  }
  return d;
}

cplx GaussianBeam::amp(double s, const Vec& y) const {
  return ric_.amp(s) * cutoff(y.norm());
}

cplx GaussianBeam::value_chart(double s, const Vec& y) const {
  return std::exp(cplx(0, 1) * opt_.lambda * phase(s, y)) * amp(s, y);
}

cplx GaussianBeam::box_chart(double s, const Vec& y) const {
  const Row r = make_row(*this, s, 1e-4);
  return box_at(*this, r, y, 1e-4).boxU;
}

bool GaussianBeam::locate(const Vec& x, double& s, Vec& y) const {
  const int n = chart_->n();
  if (affine_) {
    const Vec c = aff_Qinv_ * (x - aff_P_);
    const double sv = chart_->s0() + c(0);
    if (sv < chart_->s0() - 1e-12 || sv > chart_->s1() + 1e-12) return false;
    s = sv;
    y = c.tail(n);
    return true;
  }
  // seed from the nearest axis sample, then Newton
  double best = std::numeric_limits<double>::infinity();
  double sseed = chart_->s0();
  for (const auto& [ss, pt] : seeds_) {
    const double d2 = (pt - x).squaredNorm();
    if (d2 < best) {
      best = d2;
      sseed = ss;
    }
  }
  double sv = sseed;
  Vec yv = Vec::Zero(n);
  if (!chart_->from_manifold(x, sv, yv)) return false;
  s = sv;
  y = yv;
  return true;
}

cplx GaussianBeam::value_hint(const Vec& x, double& s, Vec& y) const {
  if (affine_) {
    double sv;
    Vec yv;
    if (!locate(x, sv, yv)) return cplx(0, 0);
    s = sv;
    y = yv;
  } else {
    if (!chart_->from_manifold(x, s, y)) {
      if (!locate(x, s, y)) return cplx(0, 0);
    }
  }
  if (y.norm() >= opt_.delta_prime) return cplx(0, 0);
  return value_chart(s, y);
}

cplx GaussianBeam::value(const Vec& x) const {
  double s = 0.5 * (chart_->s0() + chart_->s1());
  Vec y = Vec::Zero(chart_->n());
  if (!locate(x, s, y)) return cplx(0, 0);
  if (y.norm() >= opt_.delta_prime) return cplx(0, 0);
  return value_chart(s, y);
}

ChartEval GaussianBeam::eval_hint(const Vec& x, double& s, Vec& y) const {
  const int n = chart_->n();
  ChartEval e;
  e.dphi = CVec::Zero(n + 1);
  e.da = CVec::Zero(n + 1);
  if (affine_) {
    double sv;
    Vec yv;
    if (!locate(x, sv, yv)) return e;
    s = sv;
    y = yv;
  } else {
    if (!chart_->from_manifold(x, s, y)) {
      if (!locate(x, s, y)) return e;
    }
  }
  if (y.norm() >= opt_.delta_prime) return e;
  e.inside = true;
  e.s = s;
  e.y = y;
  e.phi = phase(s, y);

  const CVec dphi_c = dphase(s, y);
  const double dp = opt_.delta_prime;
  const double rr = y.norm();
  const cplx a0 = ric_.amp(s);
  const double chi = cutoff(rr);
  const double chid = (rr < 1e-14) ? 0.0 : sstep_d1(rr, 0.5 * dp, dp);
  CVec dA(n + 1);
  dA(0) = ric_.amp_deriv(s) * chi;
  for (int j = 0; j < n; ++j)
    dA(1 + j) = a0 * chid * (rr < 1e-14 ? 0.0 : y(j) / rr);
  e.a = a0 * chi;

  const Mat Jinv = chart_->jacobian(s, y).inverse();
  for (int mu = 0; mu <= n; ++mu) {
    cplx accp(0, 0), acca(0, 0);
    for (int a = 0; a <= n; ++a) {
      accp += Jinv(a, mu) * dphi_c(a);
      acca += Jinv(a, mu) * dA(a);
    }
    e.dphi(mu) = accp;
    e.da(mu) = acca;
  }
  return e;
}

CVec GaussianBeam::gradient_hint(const Vec& x, double& s, Vec& y) const {
  const int n = chart_->n();
  const ChartEval e = eval_hint(x, s, y);
  if (!e.inside) return CVec::Zero(n + 1);
  const cplx osc = std::exp(cplx(0, 1) * opt_.lambda * e.phi);
  CVec grad(n + 1);
  for (int mu = 0; mu <= n; ++mu)
    grad(mu) = osc * (cplx(0, 1) * opt_.lambda * e.dphi(mu) * e.a + e.da(mu));
  return grad;
}

// ----------------------------------------------------------------- norms ----

namespace {

// odometer over an n-dimensional tensor grid
template <typename F>
void for_grid(int n, int ny, F&& fn) {
  std::vector<int> idx(n, 0);
  while (true) {
    fn(idx);
    int k = 0;
    while (k < n) {
      if (++idx[k] < ny) break;
      idx[k] = 0;
      ++k;
    }
    if (k == n) break;
  }
}

double trap_w(int i, int np) { return (i == 0 || i == np - 1) ? 0.5 : 1.0; }

}  // namespace

double beam_residual_norm(const GaussianBeam& beam, int ns, int ny) {
  const FermiChart& ch = beam.chart();
  const int n = ch.n();
  const double lam = beam.options().lambda;
  const double dp = beam.options().delta_prime;
  const double mu = std::max(beam.riccati().min_im_eig(), 1e-6);
  double r = std::min(dp, 6.0 / std::sqrt(lam * mu));
  r = std::max(r, dp / 50.0);

  const double s0 = ch.s0(), s1 = ch.s1();
  const double dsq = (s1 - s0) / (ns - 1);
  const double dyq = 2.0 * r / (ny - 1);

  std::vector<double> row_acc(ns, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < ns; ++i) {
    const double s = s0 + i * dsq;
    const Row row = make_row(beam, s, 1e-4);
    double acc = 0.0;
    Vec y(n);
    for_grid(n, ny, [&](const std::vector<int>& idx) {
      double w = trap_w(i, ns) * dsq;
      for (int j = 0; j < n; ++j) {
        y(j) = -r + idx[j] * dyq;
        w *= trap_w(idx[j], ny) * dyq;
      }
      const BoxOut out = box_at(beam, row, y, 1e-4);
      acc += std::norm(out.boxU) * out.center.sqg * w;
    });
    row_acc[i] = acc;
  }
  double total = 0.0;
  for (double v : row_acc) total += v;
  return std::sqrt(total);
}

double source_norm(const GaussianBeam& beam, const SourceWindow& w, int ns,
                   int ny) {
  const FermiChart& ch = beam.chart();
  const int n = ch.n();
  const double dp = beam.options().delta_prime;
  const double lam = beam.options().lambda;
  const double mu = std::max(beam.riccati().min_im_eig(), 1e-6);
  double r = std::min(dp, 6.0 / std::sqrt(lam * mu));
  r = std::max(r, dp / 50.0);

  const double s0 = ch.s0(), s1 = ch.s1();
  const double dsq = (s1 - s0) / (ns - 1);
  const double dyq = 2.0 * r / (ny - 1);

  auto zm = [&](double t) { return smoothstep_cinf(t, w.zm_a, w.zm_b); };
  auto zp = [&](double t) {
    return (1.0 - smoothstep_cinf(t, w.zp_a - w.zp_pad, w.zp_a)) *
           smoothstep_cinf(t, w.zp_b, w.zp_b + w.zp_pad);
  };
  const double hz = 1e-6;
  auto zm_d1 = [&](double t) {
    return (zm(t + hz) - zm(t - hz)) / (2 * hz);
  };

  std::vector<double> row_acc(ns, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < ns; ++i) {
    const double s = s0 + i * dsq;
    const Row row = make_row(beam, s, 1e-4);
    double acc = 0.0;
    Vec y(n);
    for_grid(n, ny, [&](const std::vector<int>& idx) {
      double wq = trap_w(i, ns) * dsq;
      for (int j = 0; j < n; ++j) {
        y(j) = -r + idx[j] * dyq;
        wq *= trap_w(idx[j], ny) * dyq;
      }
      // cheap support test before the full operator evaluation
      const Vec xc = ch.to_manifold(row.sl[1], y);
      const double zpv = zp(xc(0));
      if (zpv == 0.0) return;

      const double h = 1e-4;
      const BoxOut out = box_at(beam, row, y, h);
      const Node& c = out.center;

      // commutator: 2 <grad zm, grad Re U>
      const double zmd = zm_d1(c.t0);
      double cross = 0.0;
      for (int a = 0; a <= n; ++a)
        for (int bcol = 0; bcol <= n; ++bcol)
          cross += zmd * c.J0(a) * c.Ginv(a, bcol) * std::real(out.dU(bcol));

      // box zm by flux differences, sharing the shifted nodes
      double divz = 0.0;
      {
        const Node nm = node_at(beam, row, 0, y);
        const Node np = node_at(beam, row, 2, y);
        const double spread = row.sl[2].s - row.sl[0].s;
        auto fz = [&](const Node& nd) {
          const double zd = zm_d1(nd.t0);
          double f = 0.0;
          for (int bcol = 0; bcol <= n; ++bcol)
            f += nd.Ginv(0, bcol) * zd * nd.J0(bcol);
          return nd.sqg * f;
        };
        divz += (fz(np) - fz(nm)) / spread;
      }
      for (int j = 0; j < n; ++j) {
        Vec yp = y, ym2 = y;
        yp(j) += h;
        ym2(j) -= h;
        const Node np = node_at(beam, row, 1, yp);
        const Node nm = node_at(beam, row, 1, ym2);
        auto fz = [&](const Node& nd) {
          const double zd = zm_d1(nd.t0);
          double f = 0.0;
          for (int bcol = 0; bcol <= n; ++bcol)
            f += nd.Ginv(1 + j, bcol) * zd * nd.J0(bcol);
          return nd.sqg * f;
        };
        divz += (fz(np) - fz(nm)) / (2 * h);
      }
      const double boxzm = divz / c.sqg;

      const double f = zpv * (zm(c.t0) * std::real(out.boxU) + 2.0 * cross +
                              boxzm * std::real(out.U));
      acc += f * f * c.sqg * wq;
    });
    row_acc[i] = acc;
  }
  double total = 0.0;
  for (double v : row_acc) total += v;
  return std::sqrt(total);
}

cplx laplace_beltrami_fd(const MetricPtr& m,
                         const std::function<cplx(const Vec&)>& u,
                         const Vec& x, double h) {
  const int d = m->dim;
  auto flux = [&](const Vec& p, int muq) {
    const Mat ginv = m->inverse_metric(p);
    const double sq = m->sqrt_abs_det(p);
    cplx acc(0, 0);
    for (int nu = 0; nu < d; ++nu) {
      Vec pp = p, pm = p;
      pp(nu) += h;
      pm(nu) -= h;
      acc += ginv(muq, nu) * (u(pp) - u(pm)) / (2 * h);
    }
    return sq * acc;
  };
  cplx div(0, 0);
  for (int muq = 0; muq < d; ++muq) {
    Vec xp = x, xm = x;
    xp(muq) += h;
    xm(muq) -= h;
    div += (flux(xp, muq) - flux(xm, muq)) / (2 * h);
  }
  return div / m->sqrt_abs_det(x);
}

}  // namespace gbeam
