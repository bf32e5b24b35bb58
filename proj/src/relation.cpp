#include "gbeam/relation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "gbeam/interaction.hpp"
#include "gbeam/util.hpp"

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

template <typename M>
M hermite_mat(double t, const M& f0, const M& d0, const M& f1, const M& d1,
              double dt) {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * f0 + ((t3 - 2 * t2 + t) * dt) * d0 +
         (-2 * t3 + 3 * t2) * f1 + ((t3 - t2) * dt) * d1;
}

std::uint64_t hash_mix(std::uint64_t h, double v) {
  std::uint64_t b = 0;
  std::memcpy(&b, &v, sizeof(b));
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

std::uint64_t hash_vec(std::uint64_t h, const Vec& v) {
  for (int i = 0; i < v.size(); ++i) h = hash_mix(h, v(i));
  return h;
}

// g-orthonormal frame at x: column 0 future unit timelike (aligned with the
// hint when given), columns 1..n spacelike unit, mutually g-orthogonal
Mat on_frame(const Metric& m, const Vec& x, const Vec& hint = Vec()) {
  const int d = m.dim;
  const Mat g = m.metric_at(x);
  Vec u0 = hint.size() ? hint : m.time_axis(x);
  const double q0 = u0.dot(g * u0);
  if (q0 >= 0) throw std::invalid_argument("on_frame: hint not timelike");
  u0 /= std::sqrt(-q0);
  if (u0(0) < 0) u0 = -u0;
  Mat E(d, d);
  E.col(0) = u0;
  int filled = 1;
  for (int k = 0; k < d && filled < d; ++k) {
    Vec w = Vec::Zero(d);
    w(k) = 1.0;
    w += u0 * u0.dot(g * w);  // project out the timelike leg (norm -1)
    for (int j = 1; j < filled; ++j) w -= E.col(j) * E.col(j).dot(g * w);
    const double nn = w.dot(g * w);
    if (nn > 1e-10) E.col(filled++) = w / std::sqrt(nn);
  }
  if (filled < d) throw std::runtime_error("on_frame: degenerate metric");
  return E;
}

// last parameter (walking from 0 toward dir * end of the trace window) at
// which the trace is still inside K
double clip_to_box(const Geodesic& g, double dir, const Box& K) {
  const double end = dir > 0 ? g.s_max : g.s_min;
  if (!K.contains(g.point(0.0))) return 0.0;
  const double step = 0.05;
  double prev = 0.0;
  for (int k = 1;; ++k) {
    double s = dir * step * k;
    const bool last = (dir > 0 && s >= end) || (dir < 0 && s <= end);
    if (last) s = end;
    if (!K.contains(g.point(s))) {
      double a = prev, b = s;
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (a + b);
        (K.contains(g.point(mid)) ? a : b) = mid;
      }
      return a;
    }
    prev = s;
    if (last) return end;
  }
}

// sample pattern over the transverse ball of a foliation: origin plus axis
// points at a few radial shells
std::vector<Vec> ball_pattern(int n, double delta, int shells) {
  std::vector<Vec> out;
  out.push_back(Vec::Zero(n));
  for (int k = 1; k <= shells; ++k) {
    const double r = 0.95 * delta * static_cast<double>(k) / shells;
    for (int i = 0; i < n; ++i) {
      Vec a = Vec::Zero(n);
      a(i) = r;
      out.push_back(a);
      a(i) = -r;
      out.push_back(a);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Foliation
// ---------------------------------------------------------------------------

Foliation::Foliation(MetricPtr m, FolSide side, Vec mu_start, Vec mu_end,
                     double delta)
    : m_(std::move(m)),
      side_(side),
      p0_(std::move(mu_start)),
      p1_(std::move(mu_end)),
      delta_(delta) {
  if (delta_ <= 0) throw std::invalid_argument("Foliation: delta must be > 0");
  const int d = m_->dim;
  if (p0_.size() != d || p1_.size() != d)
    throw std::invalid_argument("Foliation: path endpoint dimension mismatch");
  const Vec v = 0.5 * (p1_ - p0_);
  for (double t : {-1.0, 0.0, 1.0}) {
    const Vec x = mu(t);
    if (m_->inner(x, v, v) >= 0 || v(0) <= 0)
      throw std::invalid_argument(
          "Foliation: path must be timelike future-pointing");
  }
  affine_ = flat_connection(*m_);
  const Mat E0 = on_frame(*m_, p0_, v);
  const int n = d - 1;
  if (affine_) {
    tgrid_ = {0.0};
    frames_ = {E0.rightCols(n)};
    dframes_ = {Mat::Zero(d, n)};
    return;
  }
  // parallel transport of the spacelike frame along the path (RK4 in t)
  const int N = 81;
  tgrid_.resize(N);
  frames_.resize(N);
  dframes_.resize(N);
  const double dt = 2.0 / (N - 1);
  Mat E = E0.rightCols(n);
  auto rhs = [&](double t, const Mat& Ecur) -> Mat {
    return -contract_first(m_->christoffel(mu(t)), v) * Ecur;
  };
  for (int i = 0; i < N; ++i) {
    const double t = -1.0 + dt * i;
    tgrid_[i] = t;
    frames_[i] = E;
    dframes_[i] = rhs(t, E);
    if (i + 1 < N) {
      const Mat k1 = dframes_[i];
      const Mat k2 = rhs(t + 0.5 * dt, E + 0.5 * dt * k1);
      const Mat k3 = rhs(t + 0.5 * dt, E + 0.5 * dt * k2);
      const Mat k4 = rhs(t + dt, E + dt * k3);
      E += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
  }
}

Vec Foliation::mu(double t) const { return p0_ + 0.5 * (t + 1.0) * (p1_ - p0_); }

Vec Foliation::mu_dot(double) const { return 0.5 * (p1_ - p0_); }

Mat Foliation::frame(double t) const {
  if (affine_) return frames_[0];
  const int N = static_cast<int>(tgrid_.size());
  const double dt = 2.0 / (N - 1);
  double u = (t + 1.0) / dt;
  int i = static_cast<int>(std::floor(u));
  i = std::max(0, std::min(N - 2, i));
  const double loc = u - i;
  return hermite_mat(loc, frames_[i], dframes_[i], frames_[i + 1],
                     dframes_[i + 1], dt);
}

Vec Foliation::map(double t, const Vec& a) const {
  const Vec base = mu(t);
  const Mat E = frame(t);
  if (affine_) return base + E * a;
  const Vec w = E * a;
  if (w.norm() < 1e-14) return base;
  return integrate_geodesic(m_, base, w, 1.0).point(1.0);
}

bool Foliation::locate(const Vec& x, double& t, Vec& a) const {
  const int d = m_->dim;
  const int n = d - 1;
  const Vec md = mu_dot(0.0);
  if (affine_) {
    Mat A(d, d);
    A.col(0) = md;
    A.rightCols(n) = frames_[0];
    const Vec sol = A.colPivHouseholderQr().solve(x - mu(0.0));
    t = sol(0);
    a = sol.tail(n);
    return true;
  }
  // initial guess from the time coordinate and the local frame
  double tc = 2.0 * (x(0) - p0_(0)) / (p1_(0) - p0_(0)) - 1.0;
  tc = std::max(-1.5, std::min(1.5, tc));
  Vec ac = Vec::Zero(n);
  {
    Mat A(d, d);
    A.col(0) = md;
    A.rightCols(n) = frame(tc);
    const Vec sol = A.colPivHouseholderQr().solve(x - mu(tc));
    tc += sol(0);
    ac = sol.tail(n);
  }
  auto residual = [&](double tt, const Vec& aa) -> Vec {
    return map(tt, aa) - x;
  };
  Vec r = residual(tc, ac);
  Mat J(d, d);
  bool have_J = false;
  const double h = 1e-5;
  for (int it = 0; it < 40; ++it) {
    if (r.norm() < 1e-10) {
      t = tc;
      a = ac;
      return true;
    }
    if (!have_J) {
      J.col(0) = (residual(tc + h, ac) - residual(tc - h, ac)) / (2 * h);
      for (int i = 0; i < n; ++i) {
        Vec ap = ac, am = ac;
        ap(i) += h;
        am(i) -= h;
        J.col(1 + i) = (residual(tc, ap) - residual(tc, am)) / (2 * h);
      }
      have_J = true;
    }
    const Vec step = J.colPivHouseholderQr().solve(r);
    double lam = 1.0;
    bool improved = false;
    for (int half = 0; half < 6; ++half) {
      const double tn = tc - lam * step(0);
      const Vec an = ac - lam * step.tail(n);
      const Vec rn = residual(tn, an);
      if (rn.norm() < r.norm()) {
        tc = tn;
        ac = an;
        r = rn;
        improved = true;
        break;
      }
      lam *= 0.5;
    }
    if (!improved) {
      if (have_J && it > 0) {
        have_J = false;  // refresh the Jacobian once before giving up
        continue;
      }
      break;
    }
  }
  if (r.norm() < 1e-8) {
    t = tc;
    a = ac;
    return true;
  }
  return false;
}

bool Foliation::contains(const Vec& x, double pad) const {
  double t = 0.0;
  Vec a;
  if (!locate(x, t, a)) return false;
  const double tpad = pad / std::max(1e-12, mu_dot(0.0).norm());
  return std::abs(t) < 1.0 + tpad && a.norm() < delta_ + pad;
}

bool Foliation::curves_timelike_future(int nt, int na) const {
  const int n = m_->dim - 1;
  const double h = 1e-4;
  for (int it = 0; it < nt; ++it) {
    const double t = -0.98 + 1.96 * it / std::max(1, nt - 1);
    for (const Vec& a : ball_pattern(n, delta_, std::max(1, na - 1))) {
      const Vec v = (map(t + h, a) - map(t - h, a)) / (2 * h);
      const Vec x = map(t, a);
      if (m_->inner(x, v, v) >= -1e-12 || v(0) <= 0) return false;
    }
  }
  return true;
}

Box Foliation::bounding_box(double pad) const {
  const int d = m_->dim;
  const int n = d - 1;
  Box b;
  if (affine_) {
    const Mat& E = frames_[0];
    b.lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
    b.hi = -b.lo;
    for (double t : {-1.0, 1.0}) {
      const Vec c = mu(t);
      for (int i = 0; i < d; ++i) {
        const double r = delta_ * E.row(i).norm();
        b.lo(i) = std::min(b.lo(i), c(i) - r);
        b.hi(i) = std::max(b.hi(i), c(i) + r);
      }
    }
  } else {
    b.lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
    b.hi = -b.lo;
    for (int it = 0; it <= 8; ++it) {
      const double t = -1.0 + 0.25 * it;
      for (const Vec& a : ball_pattern(n, delta_, 2)) {
        const Vec x = map(t, a);
        b.lo = b.lo.cwiseMin(x);
        b.hi = b.hi.cwiseMax(x);
      }
    }
    pad += 0.1 * delta_;  // sampled hull margin
  }
  b.lo.array() -= pad;
  b.hi.array() += pad;
  return b;
}

bool foliation_separation(const Foliation& fin, const Foliation& fout,
                          const CausalOracle& oc, int nt, int na) {
  const int n = fin.metric()->dim - 1;
  std::vector<Vec> bottom;
  for (const Vec& a : ball_pattern(n, fout.delta(), na))
    bottom.push_back(fout.map(-1.0, a));
  // sources must not reach the earliest observation slice
  for (int it = 0; it < nt; ++it) {
    const double t = -1.0 + 2.0 * it / std::max(1, nt - 1);
    for (const Vec& a : ball_pattern(n, fin.delta(), na)) {
      const Vec p = fin.map(t, a);
      for (const Vec& q : bottom)
        if (oc.causally_leq(p, q)) return false;
    }
  }
  // the observation region must not see the latest source-path point
  const Vec top = fin.mu(1.0);
  for (int it = 0; it < nt; ++it) {
    const double t = -1.0 + 2.0 * it / std::max(1, nt - 1);
    for (const Vec& a : ball_pattern(n, fout.delta(), na))
      if (oc.causally_leq(top, fout.map(t, a))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// rays and closest approaches
// ---------------------------------------------------------------------------

Ray trace_ray(const MetricPtr& m, const Vec& x, const Vec& xi, double dir,
              const Box& K, double horizon) {
  Ray r{integrate_geodesic(m, x, xi, (dir > 0 ? 1.0 : -1.0) * horizon), 0.0,
        0.0};
  const double clip = clip_to_box(r.geo, dir > 0 ? 1.0 : -1.0, K);
  if (dir > 0)
    r.s_hi = clip;
  else
    r.s_lo = clip;
  return r;
}

std::vector<Approach> closest_approaches(const Geodesic& A, double a0,
                                         double a1, const Geodesic& B,
                                         double b0, double b1, int brackets) {
  const int na = (a1 - a0 > 1e-12) ? brackets : 0;
  const int nb = (b1 - b0 > 1e-12) ? brackets : 0;
  std::vector<double> sa(na + 1), sb(nb + 1);
  for (int i = 0; i <= na; ++i)
    sa[i] = na ? a0 + (a1 - a0) * i / na : a0;
  for (int j = 0; j <= nb; ++j)
    sb[j] = nb ? b0 + (b1 - b0) * j / nb : b0;
  std::vector<Vec> Pa(sa.size()), Pb(sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) Pa[i] = A.point(sa[i]);
  for (std::size_t j = 0; j < sb.size(); ++j) Pb[j] = B.point(sb[j]);
  Eigen::MatrixXd D(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i)
    for (std::size_t j = 0; j < sb.size(); ++j)
      D(i, j) = (Pa[i] - Pb[j]).norm();
  const double cell_a = na ? (a1 - a0) / na : 0.0;
  const double cell_b = nb ? (b1 - b0) / nb : 0.0;
  std::vector<Approach> out;
  for (int i = 0; i < static_cast<int>(sa.size()); ++i) {
    for (int j = 0; j < static_cast<int>(sb.size()); ++j) {
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1 && is_min; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= D.rows() || jj >= D.cols()) continue;
          if (D(ii, jj) < D(i, j)) is_min = false;
        }
      if (!is_min) continue;
      // refine by damped Gauss-Newton on the separation vector
      // r(sa, sb) = A(sa) - B(sb); exact in one step for straight rays
      double ra = sa[i], rb = sb[j];
      double fcur = (A.point(ra) - B.point(rb)).norm();
      for (int it = 0; it < 24; ++it) {
        const Vec r = A.point(ra) - B.point(rb);
        Eigen::Matrix<double, Eigen::Dynamic, 2> Jm(r.size(), 2);
        Jm.col(0) = A.tangent(ra);
        Jm.col(1) = -B.tangent(rb);
        Eigen::Matrix2d H = Jm.transpose() * Jm;
        H += 1e-12 * H.trace() * Eigen::Matrix2d::Identity();
        const Eigen::Vector2d g = Jm.transpose() * r;
        Eigen::Vector2d step = H.ldlt().solve(g);
        // keep the step inside the bracketing neighbourhood
        const double cap = 2.0 * std::max({cell_a, cell_b, 1e-6});
        const double sn = step.norm();
        if (sn > cap) step *= cap / sn;
        bool improved = false;
        double lam = 1.0;
        for (int half = 0; half < 8; ++half) {
          double na = ra - lam * step(0), nb = rb - lam * step(1);
          na = std::max(a0, std::min(a1, na));
          nb = std::max(b0, std::min(b1, nb));
          const double fn = (A.point(na) - B.point(nb)).norm();
          if (fn < fcur) {
            ra = na;
            rb = nb;
            fcur = fn;
            improved = true;
            break;
          }
          lam *= 0.5;
        }
        if (!improved || fcur < 1e-14) break;
      }
      out.push_back({fcur, ra, rb});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Approach& x, const Approach& y) { return x.dist < y.dist; });
  std::vector<Approach> kept;
  for (const Approach& c : out) {
    bool dup = false;
    for (const Approach& k : kept)
      if (std::abs(c.sa - k.sa) <= std::max(cell_a, 1e-9) &&
          std::abs(c.sb - k.sb) <= std::max(cell_b, 1e-9)) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(c);
  }
  return kept;
}

double point_ray_distance(const Geodesic& G, double s0, double s1,
                          const Vec& p, double& s_at, int brackets) {
  const int n = (s1 - s0 > 1e-12) ? brackets : 0;
  if (n == 0) {
    s_at = s0;
    return (G.point(s0) - p).norm();
  }
  const double cell = (s1 - s0) / n;
  double best = std::numeric_limits<double>::infinity(), best_s = s0;
  std::vector<double> d(n + 1);
  for (int i = 0; i <= n; ++i) d[i] = (G.point(s0 + cell * i) - p).norm();
  for (int i = 0; i <= n; ++i) {
    const bool is_min = (i == 0 || d[i] <= d[i - 1]) &&
                        (i == n || d[i] <= d[i + 1]);
    if (!is_min) continue;
    const double c = s0 + cell * i;
    const double lo = std::max(s0, c - 1.5 * cell),
                 hi = std::min(s1, c + 1.5 * cell);
    const double r = golden_min(
        [&](double s) { return (G.point(s) - p).norm(); }, lo, hi, 1e-13, 80);
    const double dr = (G.point(r) - p).norm();
    if (dr < best) {
      best = dr;
      best_s = r;
    }
  }
  s_at = best_s;
  return best;
}

bool same_null_curve(const MetricPtr& m, const LightVec& a, const LightVec& b,
                     const Box& K, double horizon, double tol) {
  const Geodesic g = integrate_bidirectional(m, b.x, b.xi, -horizon, horizon);
  const double lo = clip_to_box(g, -1.0, K), hi = clip_to_box(g, 1.0, K);
  double s_at = 0.0;
  const double d = point_ray_distance(g, lo, hi, a.x, s_at);
  if (d > tol) return false;
  const Vec tb = g.tangent(s_at);
  const double c = std::abs(tb.dot(a.xi)) / (tb.norm() * a.xi.norm());
  return c > 1.0 - 1e-8;
}

// ---------------------------------------------------------------------------
// RelationOracle
// ---------------------------------------------------------------------------

RelationOracle::RelationOracle(MetricPtr m, Foliation fol_in, Foliation fol_out,
                               RelationConfig cfg)
    : m_(std::move(m)),
      fin_(std::move(fol_in)),
      fout_(std::move(fol_out)),
      cfg_(cfg),
      oc_(m_, cfg.causal) {
  const Box bi = fin_.bounding_box(cfg_.box_pad);
  const Box bo = fout_.bounding_box(cfg_.box_pad);
  K_.lo = bi.lo.cwiseMin(bo.lo);
  K_.hi = bi.hi.cwiseMax(bo.hi);
}

CutResult RelationOracle::cut_forward(const Vec& x, const Vec& xi) const {
  std::uint64_t key = hash_vec(hash_vec(2, x), xi);
  auto it = cut_cache_.find(key);
  if (it != cut_cache_.end()) return it->second;
  const CutResult c = cut_time(oc_, x, xi, K_);
  cut_cache_.emplace(key, c);
  return c;
}

CutResult RelationOracle::cut_backward(const Vec& x, const Vec& xi) const {
  std::uint64_t key = hash_vec(hash_vec(3, x), xi);
  auto it = cut_cache_.find(key);
  if (it != cut_cache_.end()) return it->second;
  const CutResult c = cut_time_past(oc_, x, xi, K_);
  cut_cache_.emplace(key, c);
  return c;
}

QuadResult RelationOracle::membership(const LightVec& v0, const LightVec& v1,
                                      const LightVec& v2,
                                      const LightVec& v3) const {
  const std::array<const LightVec*, 4> v{&v0, &v1, &v2, &v3};
  for (int j = 0; j < 4; ++j) {
    if (m_->classify(v[j]->x, v[j]->xi) != CausalClass::Null ||
        !m_->is_future_causal(v[j]->x, v[j]->xi))
      throw std::invalid_argument(
          "relation quadruple entries must be future-pointing null");
  }
  if (!fout_.contains(v0.x))
    throw std::invalid_argument(
        "v0 must be based in the observation region");
  for (int j = 1; j < 4; ++j)
    if (!fin_.contains(v[j]->x))
      throw std::invalid_argument("v1..v3 must be based in the source region");

  QuadResult res;
  // pairwise distinctness of the generated null curves
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (same_null_curve(m_, *v[i], *v[j], K_, cfg_.horizon,
                          cfg_.witness_tol)) {
        res.verdict = Verdict::unknown;
        res.reason = "rays " + std::to_string(i) + " and " +
                     std::to_string(j) + " generate the same null curve";
        return res;
      }

  std::array<Ray, 4> R;
  R[0] = trace_ray(m_, v0.x, v0.xi, -1.0, K_, cfg_.horizon);
  for (int j = 1; j < 4; ++j)
    R[j] = trace_ray(m_, v[j]->x, v[j]->xi, +1.0, K_, cfg_.horizon);

  const std::array<std::array<int, 2>, 6> pairs{
      {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  std::array<std::vector<Approach>, 6> apr;
  double worst_gap = 0.0;
  int worst_pair = 0;
  for (int p = 0; p < 6; ++p) {
    const auto [i, j] = pairs[p];
    apr[p] = closest_approaches(R[i].geo, R[i].s_lo, R[i].s_hi, R[j].geo,
                                R[j].s_lo, R[j].s_hi, cfg_.brackets);
    const double gap = apr[p].empty()
                           ? std::numeric_limits<double>::infinity()
                           : apr[p].front().dist;
    if (gap > worst_gap) {
      worst_gap = gap;
      worst_pair = p;
    }
  }
  res.pair_gap = worst_gap;
  if (worst_gap > cfg_.gap_tol) {
    res.verdict = Verdict::nonmember;
    res.reason = "rays " + std::to_string(pairs[worst_pair][0]) + " and " +
                 std::to_string(pairs[worst_pair][1]) +
                 " have no common point (gap " + std::to_string(worst_gap) +
                 ")";
    return res;
  }

  // candidates for a common point of all four rays, seeded on pair (1,2)
  struct Candidate {
    Vec y;
    std::array<double, 4> s;
    double err;
  };
  std::vector<Candidate> cands;
  for (const Approach& ap : apr[3]) {  // pair (1,2)
    if (ap.dist > cfg_.witness_tol) continue;
    const Vec y = 0.5 * (R[1].geo.point(ap.sa) + R[2].geo.point(ap.sb));
    double s3 = 0.0, s0 = 0.0;
    const double d3 =
        point_ray_distance(R[3].geo, R[3].s_lo, R[3].s_hi, y, s3,
                           cfg_.brackets);
    const double d0 =
        point_ray_distance(R[0].geo, R[0].s_lo, R[0].s_hi, y, s0,
                           cfg_.brackets);
    const double err = std::max({ap.dist, d3, d0});
    if (err <= cfg_.witness_tol)
      cands.push_back({y, {s0, ap.sa, ap.sb, s3}, err});
  }
  if (cands.empty()) {
    res.verdict = Verdict::unknown;
    res.reason =
        "pairwise approaches within tolerance but no certified common point "
        "of all four rays";
    return res;
  }
  const Candidate& best = *std::min_element(
      cands.begin(), cands.end(),
      [](const Candidate& a, const Candidate& b) { return a.err < b.err; });

  QuadWitness w;
  w.y = best.y;
  w.s = best.s;
  for (int j = 0; j < 4; ++j) w.xi[j] = R[j].geo.tangent(best.s[j]);
  w.meet_error = best.err;
  res.witness = w;

  // pre-cut windows: s_j in [0, rho(v_j)) forward, -s_0 in [0, rho^-) back
  for (int j = 1; j < 4; ++j) {
    const CutResult cr = cut_forward(v[j]->x, v[j]->xi);
    if (cr.cut_found && best.s[j] > cr.rho - 1e-9) {
      res.verdict = Verdict::unknown;
      res.reason = "meeting point lies beyond the cut parameter of ray " +
                   std::to_string(j);
      return res;
    }
  }
  {
    const CutResult cr = cut_backward(v0.x, v0.xi);
    if (cr.cut_found && -best.s[0] > cr.rho - 1e-9) {
      res.verdict = Verdict::unknown;
      res.reason =
          "meeting point lies beyond the past cut parameter of ray 0";
      return res;
    }
  }

  // span condition at the meeting point
  SpanResult sr;
  try {
    sr = span_coefficients({w.xi[0], w.xi[1], w.xi[2], w.xi[3]});
  } catch (const std::exception& e) {
    res.verdict = Verdict::unknown;
    res.reason = std::string("span test degenerate: ") + e.what();
    return res;
  }
  if (sr.independent) {
    res.verdict = Verdict::unknown;
    res.reason =
        "observation direction outside the span of the incoming directions";
    return res;
  }
  if (std::abs(sr.kappa(0) - 1.0) > 1e-9) {
    res.verdict = Verdict::unknown;
    res.reason = "span relation excludes the observation ray";
    return res;
  }
  res.witness->kappa = sr.kappa;
  res.witness->span_residual = sr.residual;

  if (cfg_.analytic_oracle) {
    try {
      InteractionConfig ic;
      ic.m = m_;
      ic.y = w.y;
      std::vector<Vec> xin(4);
      for (int j = 0; j < 4; ++j) xin[j] = w.xi[j] / w.xi[j](0);
      const SpanResult srn = span_coefficients(xin);
      ic.xi = xin;
      ic.kappa = srn.kappa;
      DSemiOptions dso;
      dso.sweep.lambda_list = {40.0, 60.0, 90.0};
      dso.sweep.pts_per_dim = 32;
      const DSemiResult dr = eval_D_semi(make_interaction(ic), dso);
      res.analytic_value = dr.value;
      res.analytic_predicted = dr.predicted;
      if (std::abs(dr.predicted) < 1e-14 ||
          std::abs(dr.value) < 0.25 * std::abs(dr.predicted)) {
        res.verdict = Verdict::unknown;
        res.reason = "analytic interaction datum below detection threshold";
        return res;
      }
      res.verdict = Verdict::member;
      res.reason =
          "common pre-cut intersection with span condition (analytic datum "
          "confirmed)";
      return res;
    } catch (const std::exception& e) {
      res.verdict = Verdict::unknown;
      res.reason = std::string("analytic oracle failed: ") + e.what();
      return res;
    }
  }

  res.verdict = Verdict::member;
  res.reason = "common pre-cut intersection with span condition";
  return res;
}

std::vector<Vec> RelationOracle::ray_meetings(
    const Ray& A, const Ray& B,
    std::vector<std::array<double, 2>>* params) const {
  std::vector<Vec> out;
  for (const Approach& ap : closest_approaches(A.geo, A.s_lo, A.s_hi, B.geo,
                                               B.s_lo, B.s_hi,
                                               cfg_.brackets)) {
    if (ap.dist > cfg_.witness_tol) continue;
    const Vec y = 0.5 * (A.geo.point(ap.sa) + B.geo.point(ap.sb));
    bool dup = false;
    for (const Vec& z : out)
      if ((z - y).norm() < 10 * cfg_.witness_tol) {
        dup = true;
        break;
      }
    if (dup) continue;
    out.push_back(y);
    if (params) params->push_back({ap.sa, ap.sb});
  }
  return out;
}

bool RelationOracle::trace_to_region(const Vec& y, const Vec& dir_back,
                                     const Foliation& fol, LightVec& out,
                                     double& s_at) const {
  const Ray r = trace_ray(m_, y, dir_back, -1.0, K_, cfg_.horizon);
  double first_in = 1.0, last_in = 1.0;
  for (double s = -cfg_.eset_ds; s >= r.s_lo; s -= cfg_.eset_ds) {
    const bool inside = fol.contains(r.geo.point(s));
    if (inside && first_in > 0.0) first_in = s;
    if (inside) last_in = s;
    if (!inside && first_in <= 0.0) break;  // walked through the region
  }
  if (first_in > 0.0) return false;
  const double mid = 0.5 * (first_in + last_in);
  out.x = r.geo.point(mid);
  out.xi = r.geo.tangent(mid);
  s_at = mid;
  return fol.contains(out.x);
}

RelationOracle::ConicalPiece RelationOracle::conical_piece(
    const LightVec& v1, const LightVec& v2, int budget) const {
  for (const LightVec* v : {&v1, &v2}) {
    if (m_->classify(v->x, v->xi) != CausalClass::Null ||
        !m_->is_future_causal(v->x, v->xi))
      throw std::invalid_argument(
          "conical_piece: rays must be future-pointing null");
    if (!fin_.contains(v->x))
      throw std::invalid_argument(
          "conical_piece: rays must be based in the source region");
  }
  ConicalPiece piece;
  piece.pitch = cfg_.eset_ds;
  const Ray R1 = trace_ray(m_, v1.x, v1.xi, +1.0, K_, cfg_.horizon);
  const Ray R2 = trace_ray(m_, v2.x, v2.xi, +1.0, K_, cfg_.horizon);
  std::vector<std::array<double, 2>> prm;
  std::vector<Vec> ys = ray_meetings(R1, R2, &prm);
  // keep pre-cut meetings only
  std::vector<Vec> kept;
  std::vector<std::array<double, 2>> kept_prm;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const CutResult c1 = cut_forward(v1.x, v1.xi);
    const CutResult c2 = cut_forward(v2.x, v2.xi);
    if (c1.cut_found && prm[k][0] > c1.rho - 1e-9) continue;
    if (c2.cut_found && prm[k][1] > c2.rho - 1e-9) continue;
    kept.push_back(ys[k]);
    kept_prm.push_back(prm[k]);
  }
  piece.meeting_points = kept;
  if (budget <= 0 || kept.empty()) return piece;

  const int n = m_->dim - 1;
  CounterRng rng{774411};
  std::uint64_t ctr = 0;
  for (std::size_t mi = 0; mi < kept.size(); ++mi) {
    const Vec& y = kept[mi];
    const Vec xi1y = R1.geo.tangent(kept_prm[mi][0]);
    const Vec xi2y = R2.geo.tangent(kept_prm[mi][1]);
    const Mat E = on_frame(*m_, y);
    for (int k = 0; k < budget; ++k) {
      Vec eta = E.col(0);
      if (n == 2) {
        const double th = 2.0 * kPi * k / budget;
        eta += std::cos(th) * E.col(1) + std::sin(th) * E.col(2);
      } else {
        Vec w(n);
        for (int i = 0; i < n; ++i) w(i) = rng.normal(ctr++);
        w /= std::max(1e-12, w.norm());
        for (int i = 0; i < n; ++i) eta += w(i) * E.col(1 + i);
      }
      LightVec ta, tb, ua, ub;
      double sdum = 0.0;
      try {
        const auto [za, zb] =
            complete_span_directions(m_, y, xi1y, eta, cfg_.r_span);
        const auto [wa, wb] =
            complete_span_directions(m_, y, xi2y, eta, cfg_.r_span);
        if (!trace_to_region(y, za, fin_, ta, sdum)) continue;
        if (!trace_to_region(y, zb, fin_, tb, sdum)) continue;
        if (!trace_to_region(y, wa, fin_, ua, sdum)) continue;
        if (!trace_to_region(y, wb, fin_, ub, sdum)) continue;
      } catch (const std::exception&) {
        continue;
      }
      const Ray Re = trace_ray(m_, y, eta, +1.0, K_, cfg_.horizon);
      const CutResult ce = cut_forward(y, eta);
      const double s_cap =
          ce.cut_found ? std::min(Re.s_hi, ce.rho + 1e-9) : Re.s_hi;
      for (double s = cfg_.eset_ds; s <= s_cap; s += cfg_.eset_ds) {
        const Vec pt = Re.geo.point(s);
        if (!fout_.contains(pt)) continue;
        LightVec v0{pt, Re.geo.tangent(s)};
        QuadResult qa, qb;
        try {
          qa = membership(v0, v1, ta, tb);
          if (qa.verdict != Verdict::member) continue;
          qb = membership(v0, v2, ua, ub);
          if (qb.verdict != Verdict::member) continue;
        } catch (const std::exception&) {
          continue;
        }
        piece.samples.push_back(
            {v0, y, eta, s, k, static_cast<int>(mi)});
      }
    }
  }
  if (!piece.samples.empty()) {
    double sbar = 0.0;
    for (const ConeSample& cs : piece.samples) sbar += cs.ray_s;
    sbar /= static_cast<double>(piece.samples.size());
    piece.pitch = std::max(cfg_.eset_ds, 2.0 * kPi * sbar / budget);
    double worst = 0.0;
    for (const ConeSample& cs : piece.samples) {
      const Ray rb = trace_ray(m_, cs.v0.x, cs.v0.xi, -1.0, K_, cfg_.horizon);
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& ym : piece.meeting_points) {
        double sa = 0.0;
        best = std::min(best, point_ray_distance(rb.geo, rb.s_lo, rb.s_hi, ym,
                                                 sa, cfg_.brackets));
      }
      worst = std::max(worst, best);
    }
    piece.max_flowout_gap = worst;
  }
  return piece;
}

namespace {

// sampled chronology inside the observation region: the straight chart path
// from su to sv must be timelike future-pointing throughout
bool chart_chronological(const Foliation& fol,
                         const RelationOracle::EObsSample& su,
                         const RelationOracle::EObsSample& sv) {
  if (sv.t - su.t <= 1e-9) return false;
  const Metric& m = *fol.metric();
  const double h = 1e-4;
  for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double t = su.t + tau * (sv.t - su.t);
    const Vec a = su.a + tau * (sv.a - su.a);
    const double dt = sv.t - su.t;
    const Vec da = sv.a - su.a;
    const Vec p = fol.map(t + h * dt, a + h * da);
    const Vec q = fol.map(t - h * dt, a - h * da);
    const Vec vel = (p - q) / (2 * h);
    if (m.inner(fol.map(t, a), vel, vel) >= -1e-12 || vel(0) <= 0)
      return false;
  }
  return true;
}

}  // namespace

RelationOracle::EarliestSet RelationOracle::earliest_direct(const Vec& x,
                                                            int budget) const {
  EarliestSet set;
  set.from_relation = false;
  set.anchor = x;
  set.pitch = cfg_.eset_ds;
  const int n = m_->dim - 1;
  for (const Vec& a : ball_pattern(n, fout_.delta(), 3))
    if (oc_.causally_leq(x, fout_.map(-1.0, a)))
      throw std::invalid_argument(
          "earliest_direct: source point lies in the causal past of the "
          "earliest observation slice");
  const Mat E = on_frame(*m_, x);
  CounterRng rng{552211};
  std::uint64_t ctr = 0;
  double sbar = 0.0;
  for (int k = 0; k < budget; ++k) {
    Vec xi = E.col(0);
    if (n == 2) {
      const double th = 2.0 * kPi * k / budget;
      xi += std::cos(th) * E.col(1) + std::sin(th) * E.col(2);
    } else {
      Vec w(n);
      for (int i = 0; i < n; ++i) w(i) = rng.normal(ctr++);
      w /= std::max(1e-12, w.norm());
      for (int i = 0; i < n; ++i) xi += w(i) * E.col(1 + i);
    }
    const Ray r = trace_ray(m_, x, xi, +1.0, K_, cfg_.horizon);
    const CutResult cr = cut_forward(x, xi);
    const double s_cap =
        cr.cut_found ? std::min(r.s_hi, cr.rho + 1e-9) : r.s_hi;
    for (double s = cfg_.eset_ds; s <= s_cap; s += cfg_.eset_ds) {
      const Vec pt = r.geo.point(s);
      if (!fout_.contains(pt)) continue;
      double t = 0.0;
      Vec a;
      if (!fout_.locate(pt, t, a)) continue;
      set.samples.push_back({pt, r.geo.tangent(s), t, a, s, k, 0});
      sbar += s;
    }
  }
  if (!set.samples.empty() && budget > 0) {
    sbar /= static_cast<double>(set.samples.size());
    set.pitch = std::max(cfg_.eset_ds, 2.0 * kPi * sbar / budget);
  }
  set.cone_samples = set.samples;
  return set;
}

RelationOracle::EarliestSet RelationOracle::earliest_from_relation(
    const LightVec& v1, const LightVec& v2, int budget) const {
  const ConicalPiece piece = conical_piece(v1, v2, budget);
  EarliestSet set;
  set.from_relation = true;
  set.pitch = piece.pitch;
  const int n = m_->dim - 1;
  // admissible meeting points must not see the earliest observation slice
  std::vector<bool> ok(piece.meeting_points.size(), true);
  for (std::size_t k = 0; k < piece.meeting_points.size(); ++k)
    for (const Vec& a : ball_pattern(n, fout_.delta(), 3))
      if (oc_.causally_leq(piece.meeting_points[k], fout_.map(-1.0, a))) {
        ok[k] = false;
        break;
      }
  std::vector<int> remap(piece.meeting_points.size(), -1);
  for (std::size_t k = 0; k < piece.meeting_points.size(); ++k)
    if (ok[k]) {
      remap[k] = static_cast<int>(set.meeting_points.size());
      set.meeting_points.push_back(piece.meeting_points[k]);
    }
  set.anchor = set.meeting_points.empty() ? Vec::Zero(m_->dim)
                                          : set.meeting_points.front();
  for (const ConeSample& cs : piece.samples) {
    if (!ok[cs.meeting]) continue;
    double t = 0.0;
    Vec a;
    if (!fout_.locate(cs.v0.x, t, a)) continue;
    set.cone_samples.push_back(
        {cs.v0.x, cs.v0.xi, t, a, cs.ray_s, cs.dir, remap[cs.meeting]});
  }
  // no-earlier filter: drop samples strictly preceded inside the region
  std::vector<bool> keep(set.cone_samples.size(), true);
  for (std::size_t i = 0; i < set.cone_samples.size(); ++i)
    for (std::size_t j = 0; j < set.cone_samples.size(); ++j) {
      if (i == j) continue;
      if (chart_chronological(fout_, set.cone_samples[j],
                              set.cone_samples[i])) {
        keep[i] = false;
        break;
      }
    }
  // closure dedup on (t, a, direction) features: merge only samples closer
  // than the arc step (duplicates certified through several meetings), so
  // the chains along each ray keep their pitch spacing
  auto feature = [&](const EObsSample& s) {
    Vec f(1 + s.a.size() + s.xi.size());
    f(0) = s.t;
    f.segment(1, s.a.size()) = s.a;
    f.tail(s.xi.size()) = s.xi / std::max(1e-12, s.xi.norm());
    return f;
  };
  std::vector<Vec> kept_f;
  for (std::size_t i = 0; i < set.cone_samples.size(); ++i) {
    if (!keep[i]) continue;
    const Vec f = feature(set.cone_samples[i]);
    bool dup = false;
    for (const Vec& g : kept_f)
      if ((f - g).norm() < 0.45 * cfg_.eset_ds) {
        dup = true;
        break;
      }
    if (dup) continue;
    kept_f.push_back(f);
    set.samples.push_back(set.cone_samples[i]);
  }
  return set;
}

double hausdorff_chart(const RelationOracle::EarliestSet& A,
                       const RelationOracle::EarliestSet& B,
                       const Foliation&) {
  auto feature = [](const RelationOracle::EObsSample& s) {
    Vec f(1 + s.a.size() + s.xi.size());
    f(0) = s.t;
    f.segment(1, s.a.size()) = s.a;
    f.tail(s.xi.size()) = s.xi / std::max(1e-12, s.xi.norm());
    return f;
  };
  if (A.samples.empty() && B.samples.empty()) return 0.0;
  if (A.samples.empty() || B.samples.empty()) return 1e9;
  std::vector<Vec> fa, fb;
  for (const auto& s : A.samples) fa.push_back(feature(s));
  for (const auto& s : B.samples) fb.push_back(feature(s));
  auto one_sided = [](const std::vector<Vec>& X, const std::vector<Vec>& Y) {
    double worst = 0.0;
    for (const Vec& x : X) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& y : Y) best = std::min(best, (x - y).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_sided(fa, fb), one_sided(fb, fa));
}

}  // namespace gbeam
