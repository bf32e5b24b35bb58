#include "gbeam/fermi.hpp"

#include <cmath>
#include <stdexcept>

namespace gbeam {

namespace {

// metrics whose Christoffel symbols vanish identically (constant components)
bool flat_connection(const Metric& m) {
  if (m.family() == "minkowski") return true;
  if (auto* c = dynamic_cast<const ConformalMetric*>(&m))
    return c->cfield.kind == ScalarField::Kind::Constant;
  if (auto* w = dynamic_cast<const WarpedProductMetric*>(&m))
    return w->cfield.kind == ScalarField::Kind::Constant &&
           w->sfield.kind == ScalarField::Kind::Constant;
  return false;
}

// Gamma contracted with a vector: A(u)^mu_nu = Gamma^mu_{alpha nu} u^alpha
Mat contract_first(const std::vector<Mat>& Gam, const Vec& u) {
  const int d = static_cast<int>(Gam.size());
  Mat A = Mat::Zero(d, d);
  for (int mu = 0; mu < d; ++mu) A.row(mu) = (Gam[mu] * u).transpose();
  return A;
}

// Gamma(u, w)^mu
Vec contract_both(const std::vector<Mat>& Gam, const Vec& u, const Vec& w) {
  const int d = static_cast<int>(Gam.size());
  Vec out(d);
  for (int mu = 0; mu < d; ++mu) out(mu) = u.dot(Gam[mu] * w);
  return out;
}

double hermite(double t, double f0, double d0, double f1, double d1,
               double dt) {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * dt * d0 +
         (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * dt * d1;
}

template <typename M>
M hermite_mat(double t, const M& f0, const M& d0, const M& f1, const M& d1,
              double dt) {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * f0 + ((t3 - 2 * t2 + t) * dt) * d0 +
         (-2 * t3 + 3 * t2) * f1 + ((t3 - t2) * dt) * d1;
}

}  // namespace

// ------------------------------------------------------------- null frame ---

Mat NullFrame::as_matrix() const {
  const int d = static_cast<int>(gdot.size());
  Mat E(d, d);
  E.col(0) = gdot;
  E.col(1) = N;
  for (size_t a = 0; a < this->E.size(); ++a) E.col(2 + a) = this->E[a];
  return E;
}

NullFrame build_null_frame(const MetricPtr& m, const Vec& x, const Vec& xi) {
  const int d = m->dim;
  Vec T = m->time_axis(x);  // already unit: <T,T> = -1
  const double a = -m->inner(x, xi, T);
  if (a <= 0)
    throw std::invalid_argument("build_null_frame: xi not future-directed");
  Vec w = xi - a * T;
  const double wn = std::sqrt(m->inner(x, w, w));
  if (wn <= 0)
    throw std::invalid_argument("build_null_frame: xi has no spatial part");
  const Vec W = w / wn;

  NullFrame fr;
  fr.gdot = xi;
  fr.N = (W - T) / (2.0 * a);

  // complete with g-orthonormal spacelike vectors from the coordinate axes
  std::vector<Vec> basis = {T, W};
  for (int k = 0; k < d && static_cast<int>(fr.E.size()) < d - 2; ++k) {
    Vec v = Vec::Zero(d);
    v(k) = 1.0;
    v += m->inner(x, v, T) * T;  // project out T (timelike, norm -1)
    v -= m->inner(x, v, W) * W;
    for (const Vec& e : fr.E) v -= m->inner(x, v, e) * e;
    const double nn = m->inner(x, v, v);
    if (nn < 1e-8) continue;
    fr.E.push_back(v / std::sqrt(nn));
  }
  if (static_cast<int>(fr.E.size()) != d - 2)
    throw std::runtime_error("build_null_frame: frame completion failed");
  return fr;
}

// ------------------------------------------------------------ chart build ---

FermiChart::FermiChart(MetricPtr m, Geodesic geo, double s0, double s1,
                       double ds)
    : m_(std::move(m)), geo_(std::move(geo)), s0_(s0), s1_(s1), ds_(ds),
      n_(m_->n) {
  if (!(s0 < s1)) throw std::invalid_argument("FermiChart: need s0 < s1");
  affine_ = flat_connection(*m_);

  const NullFrame fr0 =
      build_null_frame(m_, geo_.point(s0), geo_.tangent(s0));
  Mat E = fr0.as_matrix();

  if (affine_) {
    sgrid_ = {s0, s1};
    frames_ = {E, E};
    dframes_ = {Mat::Zero(E.rows(), E.cols()), Mat::Zero(E.rows(), E.cols())};
    return;
  }

  // parallel transport E' = -Gamma(gdot) E with classical RK4
  const int nsteps = std::max(1, static_cast<int>(std::ceil((s1 - s0) / ds)));
  const double h = (s1 - s0) / nsteps;
  auto Amat = [&](double s) {
    return contract_first(m_->christoffel(geo_.point(s)), geo_.tangent(s));
  };
  sgrid_.reserve(nsteps + 1);
  frames_.reserve(nsteps + 1);
  dframes_.reserve(nsteps + 1);
  Mat A0 = Amat(s0);
  sgrid_.push_back(s0);
  frames_.push_back(E);
  dframes_.push_back(-A0 * E);
  for (int k = 0; k < nsteps; ++k) {
    const double s = s0 + k * h;
    const Mat Ah = Amat(s + 0.5 * h);
    const Mat A1 = Amat(s + h);
    const Mat k1 = -A0 * E;
    const Mat k2 = -Ah * (E + 0.5 * h * k1);
    const Mat k3 = -Ah * (E + 0.5 * h * k2);
    const Mat k4 = -A1 * (E + h * k3);
    E += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    A0 = A1;
    sgrid_.push_back(s + h);
    frames_.push_back(E);
    dframes_.push_back(-A0 * E);
  }
}

Mat FermiChart::frame(double s) const {
  const double pad = 1e-9 * (1 + s1_ - s0_);
  if (s < s0_ - pad || s > s1_ + pad)
    throw std::out_of_range("FermiChart::frame: s outside chart");
  s = std::clamp(s, sgrid_.front(), sgrid_.back());
  const auto it = std::upper_bound(sgrid_.begin(), sgrid_.end(), s);
  size_t k = (it == sgrid_.begin()) ? 0 : (it - sgrid_.begin() - 1);
  if (k + 1 >= sgrid_.size()) k = sgrid_.size() - 2;
  const double dt = sgrid_[k + 1] - sgrid_[k];
  const double t = (s - sgrid_[k]) / dt;
  return hermite_mat(t, frames_[k], dframes_[k], frames_[k + 1],
                     dframes_[k + 1], dt);
}

Mat FermiChart::frame_deriv(double s, const Mat& E) const {
  if (affine_) return Mat::Zero(E.rows(), E.cols());
  return -contract_first(m_->christoffel(geo_.point(s)), geo_.tangent(s)) * E;
}

FermiChart::Slice FermiChart::slice(double s) const {
  Slice sl;
  sl.s = s;
  sl.gamma = geo_.point(s);
  sl.gdot = geo_.tangent(s);
  sl.E = frame(s);
  sl.affine = affine_;
  if (affine_) {
    sl.Ed = Mat::Zero(sl.E.rows(), sl.E.cols());
    return sl;
  }
  sl.Gam = m_->christoffel(sl.gamma);
  sl.Ed = -contract_first(sl.Gam, sl.gdot) * sl.E;
  // dGamma/ds along the axis by central differences
  const double del = 1e-4;
  const double sm = std::max(s - del, std::min(geo_.s_min, geo_.s_max));
  const double sp = std::min(s + del, std::max(geo_.s_min, geo_.s_max));
  const auto Gm = m_->christoffel(geo_.point(sm));
  const auto Gp = m_->christoffel(geo_.point(sp));
  sl.dGam.resize(m_->dim);
  for (int mu = 0; mu < m_->dim; ++mu)
    sl.dGam[mu] = (Gp[mu] - Gm[mu]) / (sp - sm);
  return sl;
}

Vec FermiChart::to_manifold(const Slice& sl, const Vec& y) const {
  Vec w = Vec::Zero(m_->dim);
  for (int i = 0; i < n_; ++i) w += y(i) * sl.E.col(1 + i);
  Vec x = sl.gamma + w;
  if (!sl.affine) x -= 0.5 * contract_both(sl.Gam, w, w);
  return x;
}

Mat FermiChart::jacobian(const Slice& sl, const Vec& y) const {
  const int d = m_->dim;
  Mat J(d, d);
  Vec w = Vec::Zero(d);
  for (int i = 0; i < n_; ++i) w += y(i) * sl.E.col(1 + i);

  if (sl.affine) {
    J.col(0) = sl.gdot;
    for (int i = 0; i < n_; ++i) J.col(1 + i) = sl.E.col(1 + i);
    return J;
  }

  Vec wd = Vec::Zero(d);
  for (int i = 0; i < n_; ++i) wd += y(i) * sl.Ed.col(1 + i);
  Vec dGww(d);
  for (int mu = 0; mu < d; ++mu) dGww(mu) = w.dot(sl.dGam[mu] * w);

  J.col(0) = sl.gdot + wd - 0.5 * dGww - contract_both(sl.Gam, w, wd);
  for (int i = 0; i < n_; ++i)
    J.col(1 + i) = sl.E.col(1 + i) - contract_both(sl.Gam, w, sl.E.col(1 + i));
  return J;
}

Vec FermiChart::to_manifold(double s, const Vec& y) const {
  return to_manifold(slice(s), y);
}

Mat FermiChart::jacobian(double s, const Vec& y) const {
  return jacobian(slice(s), y);
}

bool FermiChart::from_manifold(const Vec& x, double& s, Vec& y) const {
  double cs = std::clamp(s, s0_, s1_);
  Vec cy = y;
  if (cy.size() != n_) cy = Vec::Zero(n_);
  double rn_prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    const Slice sl = slice(cs);
    const Vec r = to_manifold(sl, cy) - x;
    const double rn = r.norm();
    if (rn < 1e-12 * (1.0 + x.norm())) {
      s = cs;
      y = cy;
      return true;
    }
    const Mat J = jacobian(sl, cy);
    Vec step = J.colPivHouseholderQr().solve(-r);
    // damped update, keeping s inside the chart
    double lam = 1.0;
    for (int half = 0; half < 12; ++half) {
      const double ns = std::clamp(cs + lam * step(0), s0_, s1_);
      const Vec ny = cy + lam * step.tail(n_);
      const double nrn = (to_manifold(ns, ny) - x).norm();
      if (nrn < rn || half == 11) {
        cs = ns;
        cy = ny;
        break;
      }
      lam *= 0.5;
    }
    if (rn >= rn_prev * (1.0 - 1e-12) && rn > 1e-9 * (1.0 + x.norm()))
      return false;  // stalled away from the solution
    rn_prev = rn;
  }
  return false;
}

Mat FermiChart::chart_metric(const Slice& sl, const Vec& y) const {
  const Mat J = jacobian(sl, y);
  const Mat g = m_->metric_at(to_manifold(sl, y));
  return J.transpose() * g * J;
}

Mat FermiChart::chart_metric(double s, const Vec& y) const {
  return chart_metric(slice(s), y);
}

Mat FermiChart::chart_metric_inv(double s, const Vec& y) const {
  return chart_metric(s, y).inverse();
}

Mat FermiChart::Dmat(double s) const {
  Mat D = Mat::Zero(n_, n_);
  if (affine_) return D;
  const double h = 1e-3;
  const Slice sl = slice(s);
  auto f = [&](const Vec& y) {
    return chart_metric(sl, y).inverse()(1, 1);
  };
  const double f0 = f(Vec::Zero(n_));
  for (int j = 0; j < n_; ++j) {
    Vec yp = Vec::Zero(n_), ym = Vec::Zero(n_);
    yp(j) = h;
    ym(j) = -h;
    D(j, j) = (f(yp) - 2 * f0 + f(ym)) / (h * h);
    for (int k = j + 1; k < n_; ++k) {
      Vec ypp = Vec::Zero(n_), ypm = Vec::Zero(n_), ymp = Vec::Zero(n_),
          ymm = Vec::Zero(n_);
      ypp(j) = h;
      ypp(k) = h;
      ypm(j) = h;
      ypm(k) = -h;
      ymp(j) = -h;
      ymp(k) = h;
      ymm(j) = -h;
      ymm(k) = -h;
      D(j, k) = D(k, j) =
          (f(ypp) - f(ypm) - f(ymp) + f(ymm)) / (4 * h * h);
    }
  }
  return 0.25 * D;
}

// ---------------------------------------------------------------- Riccati ---

namespace {
size_t bracket_index(const std::vector<double>& grid, double s) {
  const auto it = std::upper_bound(grid.begin(), grid.end(), s);
  size_t k = (it == grid.begin()) ? 0 : (it - grid.begin() - 1);
  if (k + 1 >= grid.size()) k = grid.size() - 2;
  return k;
}
}  // namespace

CMat RiccatiSolution::Yat(double sq) const {
  const size_t k = bracket_index(s, sq);
  const double dt = s[k + 1] - s[k];
  return hermite_mat((sq - s[k]) / dt, Y[k], dY[k], Y[k + 1], dY[k + 1], dt);
}

CMat RiccatiSolution::Zat(double sq) const {
  const size_t k = bracket_index(s, sq);
  const double dt = s[k + 1] - s[k];
  return hermite_mat((sq - s[k]) / dt, Z[k], dZ[k], Z[k + 1], dZ[k + 1], dt);
}

CMat RiccatiSolution::Hat(double sq) const {
  return Zat(sq) * Yat(sq).inverse();
}

cplx RiccatiSolution::amp(double sq) const {
  const size_t k = bracket_index(s, sq);
  const cplx dk = Y[k].determinant();
  const cplx d = Yat(sq).determinant();
  // continuous branch: phase unwrapped along the grid, local correction
  const double theta = logdet_im[k] + std::arg(d / dk);
  const double logmod = std::log(std::abs(d));
  return std::exp(cplx(-0.5 * logmod, -0.5 * theta));
}

double RiccatiSolution::det_imH(double sq) const {
  const CMat H = Hat(sq);
  const Mat imH = H.imag();
  return imH.determinant();
}

Mat RiccatiSolution::Dat(double sq) const {
  const size_t k = bracket_index(s, sq);
  const double t = (sq - s[k]) / (s[k + 1] - s[k]);
  return (1.0 - t) * Dsamp[k] + t * Dsamp[k + 1];
}

CMat RiccatiSolution::Hprime(double sq) const {
  const int n = static_cast<int>(Y.front().rows());
  Mat C = Mat::Zero(n, n);
  for (int j = 1; j < n; ++j) C(j, j) = 2.0;
  const CMat H = Hat(sq);
  return -Dat(sq).cast<cplx>() - H * C * H;
}

cplx RiccatiSolution::amp_deriv(double sq) const {
  const int n = static_cast<int>(Y.front().rows());
  Mat C = Mat::Zero(n, n);
  for (int j = 1; j < n; ++j) C(j, j) = 2.0;
  return -0.5 * (C.cast<cplx>() * Hat(sq)).trace() * amp(sq);
}

double RiccatiSolution::min_im_eig() const {
  double mn = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < s.size(); ++k) {
    const CMat H = Z[k] * Y[k].inverse();
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(H.imag()));
    mn = std::min(mn, es.eigenvalues().minCoeff());
  }
  return mn;
}

namespace {

// One leg of the Riccati integration from sa to sb (either direction), RK4
// with a fixed signed step.  Samples appear in traversal order; logdet_im is
// unwrapped along the path starting from arg(det Y0).
struct RiccatiLeg {
  std::vector<double> s;
  std::vector<CMat> Y, Z, dY, dZ;
  std::vector<Mat> Dsamp;
  std::vector<double> logdet_im;
  size_t size() const { return s.size(); }
};

RiccatiLeg integrate_riccati_leg(const FermiChart& chart, double sa, double sb,
                                 const CMat& Y0, const CMat& Z0, double h) {
  const int n = chart.n();
  Mat C = Mat::Zero(n, n);
  for (int j = 1; j < n; ++j) C(j, j) = 2.0;

  RiccatiLeg leg;
  const int nsteps =
      std::max(1, static_cast<int>(std::ceil(std::abs(sb - sa) / h)));
  const double hh = (sb - sa) / nsteps;
  CMat Y = Y0, Z = Z0;
  Mat D0 = chart.Dmat(sa);
  auto push = [&](double s, const CMat& Yv, const CMat& Zv, const Mat& Dv) {
    leg.s.push_back(s);
    leg.Y.push_back(Yv);
    leg.Z.push_back(Zv);
    leg.dY.push_back(C * Zv);
    leg.dZ.push_back(-Dv * Yv);
    leg.Dsamp.push_back(Dv);
    const cplx det = Yv.determinant();
    if (leg.logdet_im.empty()) {
      leg.logdet_im.push_back(std::arg(det));
    } else {
      const cplx prev = leg.Y[leg.Y.size() - 2].determinant();
      leg.logdet_im.push_back(leg.logdet_im.back() + std::arg(det / prev));
    }
  };
  push(sa, Y, Z, D0);

  for (int k = 0; k < nsteps; ++k) {
    const double s = sa + k * hh;
    const Mat Dh = chart.Dmat(s + 0.5 * hh);
    const Mat D1 = chart.Dmat(s + hh);
    const CMat kY1 = C * Z, kZ1 = -D0 * Y;
    const CMat kY2 = C * (Z + 0.5 * hh * kZ1),
               kZ2 = -Dh * (Y + 0.5 * hh * kY1);
    const CMat kY3 = C * (Z + 0.5 * hh * kZ2),
               kZ3 = -Dh * (Y + 0.5 * hh * kY2);
    const CMat kY4 = C * (Z + hh * kZ3), kZ4 = -D1 * (Y + hh * kY3);
    Y += hh / 6.0 * (kY1 + 2 * kY2 + 2 * kY3 + kY4);
    Z += hh / 6.0 * (kZ1 + 2 * kZ2 + 2 * kZ3 + kZ4);
    D0 = D1;
    push(s + hh, Y, Z, D0);
  }
  return leg;
}

}  // namespace

RiccatiSolution solve_riccati(const FermiChart& chart, double s0, double s1,
                              const CMat& Y0, const CMat& Z0, double h) {
  return solve_riccati_from(chart, s0, s1, s0, Y0, Z0, h);
}

RiccatiSolution solve_riccati_from(const FermiChart& chart, double s0,
                                   double s1, double s_init, const CMat& Y0,
                                   const CMat& Z0, double h) {
  if (!(s0 < s1))
    throw std::invalid_argument("solve_riccati: need s0 < s1");
  if (!(s0 <= s_init && s_init <= s1))
    throw std::invalid_argument("solve_riccati: init point outside [s0, s1]");

  RiccatiSolution sol;
  sol.det_imH0 = Mat((Z0 * Y0.inverse()).imag()).determinant();

  const double tiny = 1e-12 * (1.0 + s1 - s0);
  RiccatiLeg fwd, bwd;
  if (s_init < s1 - tiny)
    fwd = integrate_riccati_leg(chart, s_init, s1, Y0, Z0, h);
  if (s_init > s0 + tiny)
    bwd = integrate_riccati_leg(chart, s_init, s0, Y0, Z0, h);

  // Assemble in ascending s: the backward leg reversed, then the forward leg
  // minus its duplicate of the initialization sample.  Both legs unwrap
  // logdet_im from the same anchor value at s_init, and the per-step
  // increments are direction-independent, so the merged branch is continuous.
  auto take = [&sol](const RiccatiLeg& leg, size_t k) {
    sol.s.push_back(leg.s[k]);
    sol.Y.push_back(leg.Y[k]);
    sol.Z.push_back(leg.Z[k]);
    sol.dY.push_back(leg.dY[k]);
    sol.dZ.push_back(leg.dZ[k]);
    sol.Dsamp.push_back(leg.Dsamp[k]);
    sol.logdet_im.push_back(leg.logdet_im[k]);
  };
  for (size_t k = bwd.size(); k-- > 0;) take(bwd, k);
  for (size_t k = (bwd.size() > 0 && fwd.size() > 0) ? 1 : 0; k < fwd.size();
       ++k)
    take(fwd, k);
  return sol;
}

}  // namespace gbeam
