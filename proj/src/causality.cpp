#include "gbeam/causality.hpp"

#include <cmath>

namespace gbeam {

namespace {

// quantized hash of a source point for fan caching
std::uint64_t point_key(const Vec& x) {
  std::uint64_t h = 1469598103934665603ull;
  for (int i = 0; i < x.size(); ++i) {
    const auto v = static_cast<long long>(std::llround(x(i) * 1e9));
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<unsigned char>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ull;
    }
  }
  return h;
}

// flat-cone data: dt = y0 - x0, dr = |y' - x'|
struct ConeGap {
  double dt, dr;
};
ConeGap cone_gap(const Vec& x, const Vec& y) {
  ConeGap g;
  g.dt = y(0) - x(0);
  g.dr = (y.tail(y.size() - 1) - x.tail(x.size() - 1)).norm();
  return g;
}

}  // namespace

// ----------------------------------------------------------- ArrivalFan -----
ArrivalFan::ArrivalFan(MetricPtr m, Vec source, bool forward,
                       const CausalConfig& cfg)
    : m_(std::move(m)), src_(std::move(source)), forward_(forward), cfg_(cfg) {
  if (m_->n != 2)
    throw std::invalid_argument("ArrivalFan: implemented for n == 2 only");
  const int N = cfg_.fan_dirs;
  rays_.resize(N);
  thetas_.resize(N);
  GeoOptions opt;
  opt.rtol = 1e-9;
  opt.atol = 1e-11;
  opt.renull = true;
  opt.h_max = 0.25;
  const double s_end = 1.5 * (cfg_.fan_time + cfg_.fan_radius);
  for (int k = 0; k < N; ++k) {
    const double th = 2.0 * kPi * k / N;
    thetas_[k] = th;
    Vec xi(3);
    if (forward_) {
      xi.resize(3);
      xi << 1.0, std::cos(th), std::sin(th);
      xi = m_->project_null(src_, xi);  // future root, spatial part kept
    } else {
      // past-directed with spatial heading (cos th, sin th)
      Vec sp(3);
      sp << 1.0, -std::cos(th), -std::sin(th);
      xi = -m_->project_null(src_, sp);
    }
    const Geodesic geo = integrate_geodesic(m_, src_, xi, s_end, opt);
    auto& line = rays_[k];
    for (double s = 0.0;; s += cfg_.fan_ds) {
      if (s > geo.s_max) break;
      const Vec p = geo.point(s);
      Sample smp{s, p(0), p(1), p(2)};
      line.push_back(smp);
      const double r =
          std::hypot(p(1) - src_(1), p(2) - src_(2));
      if (std::abs(p(0) - src_(0)) > cfg_.fan_time || r > cfg_.fan_radius)
        break;
    }
  }
}

ArrivalFan::Witness ArrivalFan::arrival_witness(const Eigen::Vector2d& p) const {
  const int N = static_cast<int>(rays_.size());
  const double bad = forward_ ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
  Witness best{bad, -1, 0.0, 0.0};
  if ((p - Eigen::Vector2d(src_(1), src_(2))).norm() < 1e-12) {
    best = {src_(0), 0, 0.0, thetas_[0]};
    return best;
  }
  // per-ray closest approach: distance, signed transverse miss, time there
  std::vector<double> miss(N), dist(N), tarr(N), sarr(N);
  for (int k = 0; k < N; ++k) {
    const auto& line = rays_[k];
    double bd = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < static_cast<int>(line.size()); ++i) {
      const double dx = p.x() - line[i].px, dy = p.y() - line[i].py;
      const double d2 = dx * dx + dy * dy;
      if (d2 < bd) {
        bd = d2;
        bi = i;
      }
    }
    // parabolic refinement in s through (bi-1, bi, bi+1) when interior
    double s_star = line[bi].s;
    double t_star = line[bi].t;
    double px = line[bi].px, py = line[bi].py;
    double tx, ty;  // spatial tangent direction estimate
    if (bi > 0 && bi + 1 < static_cast<int>(line.size())) {
      auto d2at = [&](int i) {
        const double dx = p.x() - line[i].px, dy = p.y() - line[i].py;
        return dx * dx + dy * dy;
      };
      const double dm = d2at(bi - 1), d0 = d2at(bi), dp = d2at(bi + 1);
      const double denom = dm - 2 * d0 + dp;
      double off = 0.0;
      if (std::abs(denom) > 1e-300) off = 0.5 * (dm - dp) / denom;
      off = std::clamp(off, -1.0, 1.0);
      const double h = line[bi + 1].s - line[bi].s;
      s_star = line[bi].s + off * h;
      // quadratic interpolation of position/time via neighboring samples
      const double a = 0.5 * off * (off - 1.0), b = (1.0 - off * off),
                   c = 0.5 * off * (off + 1.0);
      t_star = a * line[bi - 1].t + b * line[bi].t + c * line[bi + 1].t;
      px = a * line[bi - 1].px + b * line[bi].px + c * line[bi + 1].px;
      py = a * line[bi - 1].py + b * line[bi].py + c * line[bi + 1].py;
      tx = line[bi + 1].px - line[bi - 1].px;
      ty = line[bi + 1].py - line[bi - 1].py;
    } else {
      const int j0 = std::max(0, bi - 1);
      const int j1 = std::min<int>(static_cast<int>(line.size()) - 1, bi + 1);
      tx = line[j1].px - line[j0].px;
      ty = line[j1].py - line[j0].py;
    }
    const double tn = std::hypot(tx, ty);
    if (tn > 1e-300) {
      tx /= tn;
      ty /= tn;
    }
    const double mx = p.x() - px, my = p.y() - py;
    miss[k] = tx * my - ty * mx;  // signed transverse offset
    dist[k] = std::hypot(mx, my);
    tarr[k] = t_star;
    sarr[k] = s_star;
  }
  // crossings: sign change of the transverse miss between adjacent rays
  const double r_src = (p - Eigen::Vector2d(src_(1), src_(2))).norm();
  const double loc_tol = std::max(0.2, 0.2 * r_src);
  for (int k = 0; k < N; ++k) {
    const int k1 = (k + 1) % N;
    if (dist[k] > loc_tol || dist[k1] > loc_tol) continue;
    if (miss[k] == 0.0 && dist[k] < 1e-12) {
      if ((forward_ && tarr[k] < best.arrival) ||
          (!forward_ && tarr[k] > best.arrival))
        best = {tarr[k], k, sarr[k], thetas_[k]};
      continue;
    }
    if (miss[k] * miss[k1] < 0.0) {
      const double f = miss[k] / (miss[k] - miss[k1]);
      const double t = tarr[k] + f * (tarr[k1] - tarr[k]);
      const double s = sarr[k] + f * (sarr[k1] - sarr[k]);
      if ((forward_ && t < best.arrival) || (!forward_ && t > best.arrival)) {
        const double dth = thetas_[k1] - thetas_[k];
        best = {t, k, s,
                thetas_[k] + f * (dth > 0 ? dth : dth + 2 * kPi)};
      }
    }
  }
  return best;
}

double ArrivalFan::arrival(const Eigen::Vector2d& p) const {
  return arrival_witness(p).arrival;
}

// --------------------------------------------------------- CausalOracle -----
CausalOracle::CausalOracle(MetricPtr m, CausalConfig cfg)
    : m_(std::move(m)), cfg_(cfg) {}

bool CausalOracle::flat_cones() const {
  const std::string f = m_->family();
  return f == "minkowski" || f == "conformal";
}

const ArrivalFan& CausalOracle::fan(const Vec& source, bool forward) const {
  const auto key = std::make_pair(point_key(source), forward);
  auto it = fans_.find(key);
  if (it == fans_.end()) {
    it = fans_
             .emplace(key, std::make_unique<ArrivalFan>(m_, source, forward,
                                                        cfg_))
             .first;
  }
  return *it->second;
}

CausalVerdict CausalOracle::relation(const Vec& x, const Vec& y) const {
  if (flat_cones()) {
    const ConeGap g = cone_gap(x, y);
    if (g.dt < -cfg_.geo_tol) return CausalVerdict::None;
    const double s = g.dt - g.dr;
    if (s < -cfg_.geo_tol) return CausalVerdict::None;
    // causal; chronological iff tau above the tolerance band
    double tau2 = std::max(0.0, g.dt * g.dt - g.dr * g.dr);
    double scale = 1.0;
    if (m_->family() == "conformal") {
      const auto& cm = static_cast<const ConformalMetric&>(*m_);
      if (cm.cfield.kind == ScalarField::Kind::Constant)
        scale = cm.cfield.c0;
      else
        scale = 0.5 * (cm.cfield.value(x) + cm.cfield.value(y));  // band only
    }
    return (std::sqrt(tau2 * scale) > cfg_.tau_tol) ? CausalVerdict::Chronological
                                                    : CausalVerdict::CausalNull;
  }
  // generic: earliest-arrival fan (n == 2)
  const ArrivalFan& f = fan(x, true);
  const double A = f.arrival(Eigen::Vector2d(y(1), y(2)));
  if (!std::isfinite(A)) return CausalVerdict::None;
  const double gap = y(0) - A;
  const double band = std::max(cfg_.arr_margin, 1e-3);
  if (gap > band) return CausalVerdict::Chronological;
  if (gap > -band) return CausalVerdict::CausalNull;
  return CausalVerdict::None;
}

bool CausalOracle::chronological(const Vec& x, const Vec& y) const {
  if (flat_cones()) {
    const ConeGap g = cone_gap(x, y);
    return g.dt - g.dr > cfg_.geo_tol;
  }
  const ArrivalFan& f = fan(x, true);
  const double A = f.arrival(Eigen::Vector2d(y(1), y(2)));
  return std::isfinite(A) && y(0) - A > cfg_.arr_margin;
}

bool CausalOracle::causally_leq(const Vec& x, const Vec& y) const {
  return relation(x, y) != CausalVerdict::None;
}

double CausalOracle::tau(const Vec& x, const Vec& y) const {
  if (flat_cones()) {
    const ConeGap g = cone_gap(x, y);
    if (g.dt < 0 || g.dt < g.dr) return 0.0;
    const double tau_flat = std::sqrt(std::max(0.0, g.dt * g.dt - g.dr * g.dr));
    if (m_->family() == "minkowski") return tau_flat;
    const auto& cm = static_cast<const ConformalMetric&>(*m_);
    if (cm.cfield.kind == ScalarField::Kind::Constant)
      return std::sqrt(cm.cfield.c0) * tau_flat;
    // fall through to shooting for non-constant conformal factors
  } else {
    if (!chronological(x, y)) return 0.0;
  }
  if (flat_cones() && !chronological(x, y)) return 0.0;

  // ---- timelike shooting: unknowns (xi', s), xi^0 fixed by <xi,xi> = -1 ----
  const int d = m_->dim;
  const int n = m_->n;
  auto normalize_future = [&](const Vec& xs, Vec xi) {
    const Mat g = m_->metric_at(xs);
    double b = 0.0, c = 0.0;
    for (int i = 1; i < d; ++i) {
      b += g(0, i) * xi(i);
      for (int j = 1; j < d; ++j) c += g(i, j) * xi(i) * xi(j);
    }
    // g00 a^2 + 2 b a + c = -1; roots have opposite signs (g00 < 0, c >= 0)
    const double disc = b * b - g(0, 0) * (c + 1.0);
    if (disc < 0) throw std::runtime_error("tau shooting: bad normalization");
    const double a1 = (-b + std::sqrt(disc)) / g(0, 0);
    const double a2 = (-b - std::sqrt(disc)) / g(0, 0);
    xi(0) = std::max(a1, a2);  // future root
    return xi;
  };
  // initial guess: straight line with midpoint metric
  const Vec dxy = y - x;
  const Mat gm = m_->metric_at(0.5 * (x + y));
  double t2 = -dxy.dot(gm * dxy);
  if (t2 <= 0) t2 = 1e-8;
  double s_guess = std::sqrt(t2);
  Vec u(n + 1);
  for (int i = 0; i < n; ++i) u(i) = dxy(i + 1) / s_guess;
  u(n) = s_guess;

  GeoOptions opt;
  opt.rtol = 1e-11;
  opt.atol = 1e-13;
  auto residual = [&](const Vec& uu) {
    Vec xi = Vec::Zero(d);
    for (int i = 0; i < n; ++i) xi(i + 1) = uu(i);
    xi = normalize_future(x, xi);
    const Geodesic geo = integrate_geodesic(m_, x, xi, uu(n), opt);
    return Vec(geo.point(uu(n)) - y);
  };
  Vec F = residual(u);
  const double scale = 1.0 + y.norm();
  for (int it = 0; it < 40 && F.norm() > 1e-10 * scale; ++it) {
    Mat J(d, n + 1);
    const double eps = 1e-6;
    for (int j = 0; j <= n; ++j) {
      Vec up = u;
      up(j) += eps;
      J.col(j) = (residual(up) - F) / eps;
    }
    const Vec step = J.colPivHouseholderQr().solve(-F);
    double lam = 1.0;
    for (int h = 0; h < 10; ++h, lam *= 0.5) {
      const Vec F2 = residual(u + lam * step);
      if (F2.norm() < F.norm()) {
        u += lam * step;
        F = F2;
        break;
      }
      if (h == 9)
        throw std::runtime_error("tau: timelike shooting line search stalled");
    }
  }
  if (F.norm() > 1e-7 * scale)
    throw std::runtime_error("tau: timelike shooting did not converge");
  return u(n);  // affine time with unit-normalized tangent == proper time
}

// ----------------------------------------------------------- cut times ------
CutResult cut_time(const CausalOracle& oc, const Vec& x, const Vec& xi,
                   const Box& K) {
  const MetricPtr& m = oc.metric();
  GeoOptions opt;
  opt.renull = true;
  opt.h_max = std::max(K.diameter() / 40.0, 1e-3);
  const double s_cap = 40.0 * (K.diameter() + 1.0) / std::max(xi.norm(), 1e-12);
  const Geodesic geo = integrate_geodesic(m, x, xi, s_cap, opt);
  CutResult res;
  res.exit_s = exit_time(geo, K);
  auto chron = [&](double s) { return oc.chronological(x, geo.point(s)); };
  if (!chron(res.exit_s)) {
    res.rho = res.exit_s;
    res.cut_found = false;
    return res;
  }
  res.rho = bisect_switch(chron, 0.0, res.exit_s, oc.config().bisect_depth);
  res.cut_found = true;
  return res;
}

CutResult cut_time_past(const CausalOracle& oc, const Vec& x, const Vec& xi,
                        const Box& K) {
  const MetricPtr& m = oc.metric();
  GeoOptions opt;
  opt.renull = true;
  opt.h_max = std::max(K.diameter() / 40.0, 1e-3);
  const double s_cap = 40.0 * (K.diameter() + 1.0) / std::max(xi.norm(), 1e-12);
  // gamma_v(-s) = gamma_{x,-xi}(s)
  const Geodesic geo = integrate_geodesic(m, x, Vec(-xi), s_cap, opt);
  CutResult res;
  res.exit_s = exit_time(geo, K);
  auto chron = [&](double s) { return oc.chronological(geo.point(s), x); };
  if (!chron(res.exit_s)) {
    res.rho = res.exit_s;
    res.cut_found = false;
    return res;
  }
  res.rho = bisect_switch(chron, 0.0, res.exit_s, oc.config().bisect_depth);
  res.cut_found = true;
  return res;
}

bool is_optimizing(const CausalOracle& oc, const Vec& x, const Vec& y) {
  return oc.relation(x, y) == CausalVerdict::CausalNull;
}

// ---------------------------------------------------- observer functions ----
double earliest_obs_plus(const CausalOracle& oc, const ObserverCurve& mu,
                         const Vec& x) {
  auto pred = [&](double s) { return oc.chronological(x, mu.at(s)); };
  if (!pred(1.0)) return 1.0;   // sentinel: not visible within the window
  if (pred(-1.0)) return -1.0;  // visible from the start
  return bisect_switch(pred, -1.0, 1.0, oc.config().bisect_depth);
}

double earliest_obs_minus(const CausalOracle& oc, const ObserverCurve& mu,
                          const Vec& x) {
  auto npred = [&](double s) { return !oc.chronological(mu.at(s), x); };
  if (oc.chronological(mu.at(1.0), x)) return 1.0;   // visible to the very end
  if (!oc.chronological(mu.at(-1.0), x)) return -1.0;  // sentinel: never
  return bisect_switch(npred, -1.0, 1.0, oc.config().bisect_depth);
}

// ------------------------------------------------------------ free forms ----
double time_separation(const MetricPtr& m, const Vec& x, const Vec& y,
                       const CausalConfig& cfg) {
  return CausalOracle(m, cfg).tau(x, y);
}

CausalVerdict causal_relation(const MetricPtr& m, const Vec& x, const Vec& y,
                              const CausalConfig& cfg) {
  return CausalOracle(m, cfg).relation(x, y);
}

}  // namespace gbeam
