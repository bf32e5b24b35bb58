#include "gbeam/interaction.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gbeam {

// ------------------------------------------------------------- null spans ---

SpanResult span_coefficients(const std::vector<Vec>& xi) {
  const int k = static_cast<int>(xi.size());
  if (k < 3 || k > 4)
    throw std::invalid_argument("span_coefficients: need 3 or 4 vectors");
  const int d = static_cast<int>(xi[0].size());
  double mx = 0.0;
  for (const Vec& v : xi) {
    if (v.size() != d)
      throw std::invalid_argument("span_coefficients: dimension mismatch");
    mx = std::max(mx, v.norm());
  }
  for (int i = 0; i < k; ++i) {
    const double ni = xi[i].norm();
    if (ni < 1e-14 * mx)
      throw std::invalid_argument("span_coefficients: zero vector");
    for (int j = i + 1; j < k; ++j) {
      // a proportional pair makes the nullspace degenerate regardless of the
      // remaining vectors, so detect it before the rank test
      const double c = std::abs(xi[i].dot(xi[j])) / (ni * xi[j].norm());
      if (c > 1.0 - 1e-12)
        throw std::invalid_argument(
            "span_coefficients: proportional pair (degenerate)");
    }
  }
  Mat M(d, k);
  for (int j = 0; j < k; ++j) M.col(j) = xi[j];
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const Vec sing = svd.singularValues();
  const double tol = 1e-10 * sing(0);
  int rank = 0;
  for (int i = 0; i < sing.size(); ++i)
    if (sing(i) > tol) ++rank;
  const int nulldim = k - rank;
  SpanResult out;
  if (nulldim == 0) {
    out.independent = true;
    return out;
  }
  if (nulldim >= 2)
    throw std::invalid_argument(
        "span_coefficients: nullspace dimension >= 2 (degenerate)");
  Vec kap = svd.matrixV().col(k - 1);
  if (std::abs(kap(0)) > 1e-12) kap /= kap(0);
  out.kappa = kap;
  Vec resid = Vec::Zero(d);
  for (int j = 0; j < k; ++j) resid += kap(j) * xi[j];
  out.residual = resid.norm();
  return out;
}

namespace {

// root of the null-cone quadratic A b^2 + 2 y0 b + c = 0 near b = 0 by
// Newton from the linearized root, with a step-halving safeguard
double null_cone_root(double A, double y0, double c) {
  if (std::abs(y0) < 1e-10)
    throw std::invalid_argument(
        "complete_span_directions: vanishing linear coefficient (degenerate)");
  double b = -c / (2.0 * y0);
  auto q = [&](double bb) { return A * bb * bb + 2.0 * y0 * bb + c; };
  double qb = q(b);
  const double tol = 1e-14 * (std::abs(c) + std::abs(y0) + 1.0);
  for (int it = 0; it < 60 && std::abs(qb) > tol; ++it) {
    const double dq = 2.0 * A * b + 2.0 * y0;
    if (std::abs(dq) < 1e-14) break;
    double step = -qb / dq;
    // safeguard: halve until the residual actually decreases
    for (int h = 0; h < 40; ++h) {
      const double cand = q(b + step);
      if (std::abs(cand) <= std::abs(qb)) {
        b += step;
        qb = cand;
        break;
      }
      step *= 0.5;
    }
  }
  if (std::abs(qb) > 1e-10 * (std::abs(c) + 1.0))
    throw std::runtime_error("complete_span_directions: Newton failure");
  return b;
}

double angle_between(const Vec& a, const Vec& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

std::pair<Vec, Vec> complete_span_directions(const MetricPtr& m, const Vec& y,
                                             const Vec& xi1, const Vec& eta,
                                             double r_U) {
  const int d = m->dim;
  if (xi1.size() != d || eta.size() != d || y.size() != d)
    throw std::invalid_argument("complete_span_directions: dimension");
  const Mat g = m->metric_at(y);
  auto ip = [&](const Vec& a, const Vec& b) { return a.dot(g * b); };
  if (std::abs(ip(xi1, xi1)) > 1e-8 * xi1.squaredNorm())
    throw std::invalid_argument("complete_span_directions: xi1 not null");
  if (!m->is_future_causal(y, xi1))
    throw std::invalid_argument("complete_span_directions: xi1 not future");
  if (ip(eta, eta) > 1e-8 * eta.squaredNorm())
    throw std::invalid_argument("complete_span_directions: eta is spacelike");

  const Vec x1 = xi1 / xi1.norm();
  // transverse seed direction: the eta component orthogonal to xi1, or an
  // arbitrary axis when eta is parallel to xi1
  Vec u = eta - eta.dot(x1) * x1;
  if (u.norm() < 1e-10 * eta.norm()) {
    int best = 0;
    double bestc = std::numeric_limits<double>::infinity();
    for (int a = 0; a < d; ++a)
      if (std::abs(x1(a)) < bestc) {
        bestc = std::abs(x1(a));
        best = a;
      }
    u = Vec::Unit(d, best) - x1(best) * x1;
  }
  u /= u.norm();
  // third basis vector of the working 3-space, chosen to maximize the
  // linear coefficient <xi1, w> of the cone quadratic
  Vec w;
  double bestlin = -1.0;
  for (int a = 0; a < d; ++a) {
    Vec cand = Vec::Unit(d, a);
    cand -= cand.dot(x1) * x1;
    cand -= cand.dot(u) * u;
    if (cand.norm() < 1e-8) continue;
    cand /= cand.norm();
    const double lin = std::abs(ip(x1, cand));
    if (lin > bestlin) {
      bestlin = lin;
      w = cand;
    }
  }
  if (bestlin < 1e-10)
    throw std::invalid_argument(
        "complete_span_directions: vanishing linear coefficient (degenerate)");

  const double A = ip(w, w);
  const double x1u = ip(x1, u), x1w = ip(x1, w), uu = ip(u, u),
               uw = ip(u, w);
  auto cone_point = [&](double t) {
    const double y0 = x1w + t * uw;
    const double c = t * t * uu + 2.0 * t * x1u;
    const double b = null_cone_root(A, y0, c);
    Vec xi = x1 + t * u + b * w;
    return Vec(xi / xi.norm());
  };

  double t = std::max(1e-6, 0.5 * r_U);
  const double scale = xi1.norm();
  for (int attempt = 0; attempt < 60; ++attempt) {
    const Vec xi2 = cone_point(t);
    const Vec xi3 = cone_point(-t);
    const bool radius_ok =
        angle_between(xi2, x1) <= r_U && angle_between(xi3, x1) <= r_U;
    const bool future_ok =
        m->is_future_causal(y, xi2) && m->is_future_causal(y, xi3);
    if (radius_ok && future_ok) {
      // eta must be recoverable from the triple
      Mat B(d, 3);
      B.col(0) = xi1;
      B.col(1) = xi2;
      B.col(2) = xi3;
      const Vec coeff = B.colPivHouseholderQr().solve(eta);
      const double resid = (B * coeff - eta).norm();
      if (resid <= 1e-9 * eta.norm()) return {scale * xi2, scale * xi3};
      // degenerate triple (collapsed w component); perturb the opening
      t *= 0.73;
      continue;
    }
    t *= 0.5;
  }
  throw std::runtime_error(
      "complete_span_directions: no admissible pair within radius");
}

// --------------------------------------------------------- combined phase ---

CombinedPhase::CombinedPhase(
    std::vector<std::shared_ptr<const GaussianBeam>> beams, Vec kappa, Vec y,
    double fd_h)
    : beams_(std::move(beams)), kappa_(std::move(kappa)), y_(std::move(y)) {
  if (beams_.empty() ||
      static_cast<int>(beams_.size()) != kappa_.size())
    throw std::invalid_argument("CombinedPhase: beams/kappa size mismatch");
  const int d = static_cast<int>(y_.size());
  Q_ = CMat::Zero(d, d);
  for (int b = 0; b < d; ++b) {
    Vec xp = y_, xm = y_;
    xp(b) += fd_h;
    xm(b) -= fd_h;
    const CVec gp = gradS(xp), gm = gradS(xm);
    for (int a = 0; a < d; ++a) Q_(a, b) = (gp(a) - gm(a)) / (2.0 * fd_h);
  }
  Q_ = (0.5 * (Q_ + Q_.transpose())).eval();
  S_y_ = S(y_);
  grad_norm_y_ = gradS(y_).norm();
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(Q_.imag()));
  min_im_eig_ = es.eigenvalues().minCoeff();
}

cplx CombinedPhase::S(const Vec& x) const {
  cplx acc(0, 0);
  for (size_t j = 0; j < beams_.size(); ++j) {
    double s = 0.0;
    Vec yv = Vec::Zero(x.size() - 1);
    const ChartEval e = beams_[j]->eval_hint(x, s, yv);
    if (!e.inside)
      return cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    acc += kappa_(j) * (kappa_(j) > 0 ? e.phi : std::conj(e.phi));
  }
  return acc;
}

CVec CombinedPhase::gradS(const Vec& x) const {
  CVec acc = CVec::Zero(x.size());
  for (size_t j = 0; j < beams_.size(); ++j) {
    double s = 0.0;
    Vec yv = Vec::Zero(x.size() - 1);
    const ChartEval e = beams_[j]->eval_hint(x, s, yv);
    if (!e.inside)
      return CVec::Constant(x.size(),
                            cplx(std::numeric_limits<double>::quiet_NaN(), 0));
    acc += kappa_(j) * (kappa_(j) > 0 ? e.dphi : CVec(e.dphi.conjugate()));
  }
  return acc;
}

double CombinedPhase::growth_exponent(double scale, int ndir) const {
  const int d = static_cast<int>(y_.size());
  CounterRng rng{20240915ull};
  std::vector<double> slopes;
  for (int k = 0; k < ndir; ++k) {
    Vec dir(d);
    for (int a = 0; a < d; ++a)
      dir(a) = rng.normal(static_cast<std::uint64_t>(k) * d + a);
    if (dir.norm() < 1e-8) continue;
    dir /= dir.norm();
    const double r1 = scale, r2 = 0.5 * scale;
    const double v1 = std::imag(S(y_ + r1 * dir));
    const double v2 = std::imag(S(y_ + r2 * dir));
    if (!(v1 > 0) || !(v2 > 0)) continue;
    slopes.push_back(std::log(v1 / v2) / std::log(r1 / r2));
  }
  if (slopes.empty())
    throw std::runtime_error("growth_exponent: no usable directions");
  double sum = 0.0;
  for (double s : slopes) sum += s;
  return sum / static_cast<double>(slopes.size());
}

// ------------------------------------------------- stationary-phase limit ---

Extrapolated richardson_half(const std::vector<double>& lambdas,
                             const std::vector<double>& values) {
  if (lambdas.size() != values.size() || lambdas.size() < 2)
    throw std::invalid_argument("richardson_half: need >= 2 lambdas");
  std::vector<double> L;
  for (size_t i = 0; i + 1 < lambdas.size(); ++i) {
    const double a0 = 1.0 / std::sqrt(lambdas[i]);
    const double a1 = 1.0 / std::sqrt(lambdas[i + 1]);
    L.push_back((values[i + 1] * a0 - values[i] * a1) / (a0 - a1));
  }
  Extrapolated out;
  out.limit = L.back();
  if (L.size() == 1) {
    out.err = std::abs(L[0] - values.back());
  } else {
    for (size_t i = 0; i + 1 < L.size(); ++i)
      out.err = std::max(out.err, std::abs(L[i] - L.back()));
  }
  return out;
}

namespace {

// (2 pi)^{d/2} det(-iQ)^{-1/2} with the eigenvalue-principal branch; the
// eigenvalues of -iQ lie in the right half-plane whenever Im Q > 0
cplx gaussian_c0(const CMat& Q) {
  const int d = static_cast<int>(Q.rows());
  Eigen::ComplexEigenSolver<CMat> ces(CMat(cplx(0, -1) * Q));
  cplx det_rsqrt(1, 0);
  for (int k = 0; k < d; ++k) {
    const cplx mu = ces.eigenvalues()(k);
    if (!(std::real(mu) > 0))
      throw std::invalid_argument(
          "stationary phase: -i Hessian eigenvalue off the right half-plane");
    det_rsqrt /= std::sqrt(mu);
  }
  return std::pow(2.0 * kPi, 0.5 * d) * det_rsqrt;
}

// odometer over a d-dimensional tensor-product midpoint grid
template <typename F>
void for_box(int d, int pts, F&& fn) {
  std::vector<int> idx(d, 0);
  while (true) {
    fn(idx);
    int k = 0;
    while (k < d) {
      if (++idx[k] < pts) break;
      idx[k] = 0;
      ++k;
    }
    if (k == d) break;
  }
}

}  // namespace

PhaseLimitResult stationary_phase_limit(
    const std::function<cplx(const Vec&)>& S,
    const std::function<cplx(const Vec&)>& F, const Vec& y,
    const std::vector<double>& lambdas, int pts_per_dim, double box_factor) {
  const int d = static_cast<int>(y.size());
  // Hessian of S by central second differences
  const double h = 1e-3;
  CMat Q(d, d);
  const cplx S0 = S(y);
  for (int a = 0; a < d; ++a) {
    Vec xp = y, xm = y;
    xp(a) += h;
    xm(a) -= h;
    Q(a, a) = (S(xp) - 2.0 * S0 + S(xm)) / (h * h);
    for (int b = a + 1; b < d; ++b) {
      Vec xpp = y, xpm = y, xmp = y, xmm = y;
      xpp(a) += h;
      xpp(b) += h;
      xpm(a) += h;
      xpm(b) -= h;
      xmp(a) -= h;
      xmp(b) += h;
      xmm(a) -= h;
      xmm(b) -= h;
      Q(a, b) = Q(b, a) =
          (S(xpp) - S(xpm) - S(xmp) + S(xmm)) / (4.0 * h * h);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(Q.imag()));
  const double mu = es.eigenvalues().minCoeff();
  if (!(mu > 0))
    throw std::invalid_argument(
        "stationary_phase_limit: Im Hessian not positive definite");

  PhaseLimitResult out;
  out.C0 = gaussian_c0(Q);
  out.closed_form = out.C0 * F(y);

  for (double lam : lambdas) {
    const double r = std::sqrt(box_factor / (lam * mu));
    const double step = 2.0 * r / pts_per_dim;
    cplx acc(0, 0);
    Vec x(d);
    for_box(d, pts_per_dim, [&](const std::vector<int>& idx) {
      for (int a = 0; a < d; ++a)
        x(a) = y(a) - r + (idx[a] + 0.5) * step;
      acc += std::exp(cplx(0, 1) * lam * S(x)) * F(x);
    });
    acc *= std::pow(step, d);
    out.lambdas.push_back(lam);
    out.scaled.push_back(std::pow(lam, 0.5 * d) * acc);
  }
  std::vector<double> re(out.scaled.size()), im(out.scaled.size());
  for (size_t i = 0; i < out.scaled.size(); ++i) {
    re[i] = std::real(out.scaled[i]);
    im[i] = std::imag(out.scaled[i]);
  }
  const Extrapolated er = richardson_half(out.lambdas, re);
  const Extrapolated ei = richardson_half(out.lambdas, im);
  out.limit = cplx(er.limit, ei.limit);
  out.err = std::max(er.err, ei.err);
  return out;
}

// --------------------------------------------------- interaction configs ---

BeamOptions default_interaction_beam_options() {
  BeamOptions b;
  b.delta_prime = 0.6;
  return b;
}

InteractionBeams make_interaction(const InteractionConfig& cfg) {
  if (!cfg.m) throw std::invalid_argument("make_interaction: null metric");
  const int d = cfg.m->dim;
  if (cfg.y.size() != d)
    throw std::invalid_argument("make_interaction: point dimension");
  if (cfg.xi.size() != 4 || cfg.kappa.size() != 4)
    throw std::invalid_argument("make_interaction: need four directions");
  for (int j = 0; j < 4; ++j)
    if (std::abs(cfg.kappa(j)) < 1e-12)
      throw std::invalid_argument("make_interaction: kappa must be nonzero");
  std::vector<Vec> centers =
      cfg.centers.empty() ? std::vector<Vec>(4, cfg.y) : cfg.centers;
  if (centers.size() != 4)
    throw std::invalid_argument("make_interaction: need four base points");
  double mx = 0.0;
  for (int j = 0; j < 4; ++j) {
    const Vec& x0 = centers[j];
    const Vec& xi = cfg.xi[j];
    if (xi.size() != d || x0.size() != d)
      throw std::invalid_argument("make_interaction: direction dimension");
    const Mat g = cfg.m->metric_at(x0);
    if (std::abs(xi.dot(g * xi)) > 1e-8 * xi.squaredNorm())
      throw std::invalid_argument("make_interaction: direction not null");
    if (!cfg.m->is_future_causal(x0, xi))
      throw std::invalid_argument("make_interaction: direction not future");
    mx = std::max(mx, xi.norm());
  }
  if (cfg.centers.empty()) {
    Vec resid = Vec::Zero(d);
    for (int j = 0; j < 4; ++j) resid += cfg.kappa(j) * cfg.xi[j];
    if (resid.norm() > 1e-8 * mx)
      throw std::invalid_argument(
          "make_interaction: kappa does not annihilate the tangents");
  }

  InteractionBeams ib;
  ib.m = cfg.m;
  ib.y = cfg.y;
  ib.kappa = cfg.kappa;
  ib.tangents = cfg.xi;
  BeamOptions bo = cfg.beam;
  bo.riccati_init_s = 0.0;
  for (int j = 0; j < 4; ++j)
    ib.beams.push_back(std::make_shared<const GaussianBeam>(
        cfg.m, centers[j], cfg.xi[j], -cfg.chart_halfwidth,
        cfg.chart_halfwidth, bo));
  ib.phase = std::make_shared<const CombinedPhase>(ib.beams, cfg.kappa, cfg.y);
  return ib;
}

// ------------------------------------------------------- interaction data ---

namespace {

struct BeamPoint {
  bool inside = false;
  cplx U{0, 0};
  CVec dU;
};

// beam value (and optionally gradient) at x, oscillating at |kappa| lambda
// and conjugated when kappa < 0
BeamPoint eval_beam_signed(const GaussianBeam& b, double kappa, double lam,
                           const Vec& x, bool want_grad) {
  BeamPoint out;
  double s = 0.0;
  Vec yv = Vec::Zero(x.size() - 1);
  const ChartEval e = b.eval_hint(x, s, yv);
  if (!e.inside) return out;
  out.inside = true;
  const double lj = std::abs(kappa) * lam;
  const cplx osc = std::exp(cplx(0, 1) * lj * e.phi);
  cplx U = osc * e.a;
  if (want_grad) {
    const int d = static_cast<int>(x.size());
    out.dU = CVec(d);
    for (int mu = 0; mu < d; ++mu)
      out.dU(mu) = osc * (cplx(0, 1) * lj * e.dphi(mu) * e.a + e.da(mu));
    if (kappa < 0) out.dU = out.dU.conjugate().eval();
  }
  out.U = (kappa < 0) ? std::conj(U) : U;
  return out;
}

double window_at(const std::vector<std::function<double(const Vec&)>>& ws,
                 int j, const Vec& x) {
  if (static_cast<int>(ws.size()) <= j || !ws[j]) return 1.0;
  return ws[j](x);
}

}  // namespace

DSemiResult eval_D_semi(const InteractionBeams& ib, const DSemiOptions& opt) {
  const int d = ib.m->dim;
  const int n = d - 1;
  const double mu = ib.phase->min_im_eig();
  if (!(mu > 0))
    throw std::invalid_argument(
        "eval_D_semi: combined-phase Im Hessian not positive definite");
  auto uf = [&](const Vec& x) { return opt.u_f ? opt.u_f(x) : 1.0; };

  DSemiResult out;
  out.u_f_at_y = uf(ib.y);

  for (double lam : opt.sweep.lambda_list) {
    const double r = std::sqrt(opt.sweep.box_factor / (lam * mu));
    const double step = 2.0 * r / opt.sweep.pts_per_dim;
    double full = 0.0;
    cplx red(0, 0);
    Vec x(d);
    for_box(d, opt.sweep.pts_per_dim, [&](const std::vector<int>& idx) {
      for (int a = 0; a < d; ++a)
        x(a) = ib.y(a) - r + (idx[a] + 0.5) * step;
      double w = 1.0;
      for (int j = 0; j < 4 && w != 0.0; ++j)
        w *= window_at(opt.windows, j, x);
      if (w == 0.0) return;
      BeamPoint bp[4];
      for (int j = 0; j < 4; ++j) {
        bp[j] = eval_beam_signed(*ib.beams[j], ib.kappa(j), lam, x, false);
        if (!bp[j].inside) return;
      }
      const double sq = ib.m->sqrt_abs_det(x);
      const double ufp =
          (opt.m == 3) ? 1.0 : std::pow(uf(x), opt.m - 3);
      double pr = 1.0;
      cplx pc(1, 0);
      for (int j = 0; j < 4; ++j) {
        pr *= std::real(bp[j].U);
        pc *= bp[j].U;
      }
      full += w * pr * ufp * sq;
      red += w * pc * ufp * sq;
    });
    const double vol = std::pow(step, d);
    const double scale = std::pow(lam, 0.5 * (n + 1));
    out.lambdas.push_back(lam);
    out.full_terms.push_back(scale * full * vol);
    out.reduced.push_back(scale * 0.125 * std::real(red) * vol);
  }

  const Extrapolated ef = richardson_half(out.lambdas, out.full_terms);
  const Extrapolated er = richardson_half(out.lambdas, out.reduced);
  out.value = ef.limit;
  out.reduction = er.limit;
  out.extrap_err = std::max(ef.err, er.err);
  out.C0 = gaussian_c0(ib.phase->Q()) * ib.m->sqrt_abs_det(ib.y);
  const double ufy =
      (opt.m == 3) ? 1.0 : std::pow(out.u_f_at_y, opt.m - 3);
  out.predicted = 0.125 * std::real(out.C0) * ufy;
  double mfact = 1.0;
  for (int i = 2; i <= opt.m; ++i) mfact *= i;
  out.full_datum = -mfact * out.value;
  return out;
}

DQuasiResult eval_D_quasi(const InteractionBeams& ib,
                          const DQuasiOptions& opt) {
  if (!opt.h)
    throw std::invalid_argument("eval_D_quasi: perturbation tensor required");
  const int d = ib.m->dim;
  const int n = d - 1;
  const double mu = ib.phase->min_im_eig();
  if (!(mu > 0))
    throw std::invalid_argument(
        "eval_D_quasi: combined-phase Im Hessian not positive definite");
  const bool have_sources = !opt.sources.empty();

  DQuasiResult out;
  for (double lam : opt.sweep.lambda_list) {
    const double r = std::sqrt(opt.sweep.box_factor / (lam * mu));
    const double step = 2.0 * r / opt.sweep.pts_per_dim;
    double gs = 0.0, gt = 0.0, gh = 0.0;
    Vec x(d);
    for_box(d, opt.sweep.pts_per_dim, [&](const std::vector<int>& idx) {
      for (int a = 0; a < d; ++a)
        x(a) = ib.y(a) - r + (idx[a] + 0.5) * step;
      double w[4];
      for (int j = 0; j < 4; ++j) {
        w[j] = window_at(opt.windows, j, x);
        if (w[j] == 0.0) return;
      }
      BeamPoint bp[4];
      for (int j = 0; j < 4; ++j) {
        bp[j] = eval_beam_signed(*ib.beams[j], ib.kappa(j), lam, x, true);
        if (!bp[j].inside) return;
      }
      double u[4];
      Vec du[4];
      for (int j = 0; j < 4; ++j) {
        u[j] = w[j] * std::real(bp[j].U);
        du[j] = w[j] * bp[j].dU.real();
      }
      const double sq = ib.m->sqrt_abs_det(x);
      const Mat gi = ib.m->inverse_metric(x);
      const Mat hx = opt.h(x);
      const Mat Sh = gi * hx * gi;
      const double tr = (hx * gi).trace();
      auto iph = [&](const Vec& p, const Vec& q) { return p.dot(Sh * q); };
      auto ipg = [&](const Vec& p, const Vec& q) { return p.dot(gi * q); };
      const double cyc_h = u[1] * u[2] * iph(du[3], du[0]) +
                           u[2] * u[3] * iph(du[1], du[0]) +
                           u[3] * u[1] * iph(du[2], du[0]);
      const double cyc_g = u[1] * u[2] * ipg(du[3], du[0]) +
                           u[2] * u[3] * ipg(du[1], du[0]) +
                           u[3] * u[1] * ipg(du[2], du[0]);
      gh += cyc_h * sq;
      gt += tr * cyc_g * sq;
      if (have_sources) {
        auto src = [&](int j) {
          return (static_cast<int>(opt.sources.size()) > j && opt.sources[j])
                     ? opt.sources[j](x)
                     : 0.0;
        };
        gs += tr * u[0] *
              (u[1] * u[2] * src(3) + u[2] * u[3] * src(1) +
               u[3] * u[1] * src(2)) *
              sq;
      }
    });
    const double vol = std::pow(step, d);
    const double scale = std::pow(lam, 0.5 * (n - 3));
    out.lambdas.push_back(lam);
    out.group_source.push_back(scale * gs * vol);
    out.group_trace.push_back(scale * gt * vol);
    out.group_h.push_back(scale * gh * vol);
    out.combined.push_back(scale * (gs + 2.0 * gh - gt) * vol);
  }

  const Extrapolated ec = richardson_half(out.lambdas, out.combined);
  const Extrapolated eh = richardson_half(out.lambdas, out.group_h);
  const Extrapolated et = richardson_half(out.lambdas, out.group_trace);
  out.value = ec.limit;
  out.extrap_err = ec.err;
  out.group_h_limit = eh.limit;
  out.group_trace_limit = et.limit;
  out.C0 = gaussian_c0(ib.phase->Q()) * ib.m->sqrt_abs_det(ib.y);
  const Vec& gdot0 = ib.tangents[0];
  out.h_dot = gdot0.dot(opt.h(ib.y) * gdot0);
  out.predicted_group_h =
      0.125 * std::real(out.C0) * ib.kappa(0) * ib.kappa(0) * out.h_dot;
  out.predicted = 2.0 * out.predicted_group_h;
  return out;
}

}  // namespace gbeam
