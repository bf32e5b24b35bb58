#include "gbeam/geodesic.hpp"

#include <algorithm>

namespace gbeam {

namespace {

// Dormand-Prince RK5(4)7M tableau.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187,
                 kA53 = 64448.0 / 6561, kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33,
                 kA63 = 46732.0 / 5247, kA64 = 49.0 / 176,
                 kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;
// dense-output stage weights (Hairer's dopri5 continuous extension)
constexpr double kD1 = -12715105075.0 / 11282082432.0;
constexpr double kD3 = 87487479700.0 / 32700410799.0;
constexpr double kD4 = -10690763975.0 / 1880347072.0;
constexpr double kD5 = 701980252875.0 / 199316789632.0;
constexpr double kD6 = -1453857185.0 / 822651844.0;
constexpr double kD7 = 69997945.0 / 29380423.0;

Vec geodesic_rhs(const Metric& m, const Vec& z) {
  const int d = m.dim;
  const Vec x = z.head(d);
  const Vec xi = z.tail(d);
  const auto gamma = m.christoffel(x);
  Vec dz(2 * d);
  dz.head(d) = xi;
  for (int i = 0; i < d; ++i) dz(d + i) = -xi.dot(gamma[i] * xi);
  return dz;
}

// Re-project the tangent onto the null cone keeping the spatial part and the
// sign of xi^0.
Vec renull_tangent(const Metric& m, const Vec& x, const Vec& xi) {
  const Mat g = m.metric_at(x);
  const int d = m.dim;
  const double a2 = g(0, 0);
  double b = 0.0, c = 0.0;
  for (int i = 1; i < d; ++i) {
    b += g(0, i) * xi(i);
    for (int j = 1; j < d; ++j) c += g(i, j) * xi(i) * xi(j);
  }
  const double disc = b * b - a2 * c;
  if (disc < 0 || c <= 0) return xi;  // leave untouched if degenerate
  const double r1 = (-b + std::sqrt(disc)) / a2;
  const double r2 = (-b - std::sqrt(disc)) / a2;
  Vec out = xi;
  out(0) = (std::abs(r1 - xi(0)) <= std::abs(r2 - xi(0))) ? r1 : r2;
  return out;
}

}  // namespace

Vec Geodesic::state(double s) const {
  if (steps.empty()) throw std::runtime_error("Geodesic::state: empty trace");
  const double lo_all = std::min(s_min, s_max);
  const double hi_all = std::max(s_min, s_max);
  const double pad = 1e-9 * (1.0 + hi_all - lo_all);
  if (s < lo_all - pad || s > hi_all + pad)
    throw std::out_of_range("Geodesic::state: parameter outside trace");
  s = std::clamp(s, lo_all, hi_all);
  // binary search over intervals sorted by their lower end
  int a = 0, b = static_cast<int>(steps.size()) - 1;
  while (a < b) {
    const int mid = (a + b) / 2;
    const double hi = std::max(steps[mid].s0, steps[mid].s1);
    if (s <= hi + 1e-15)
      b = mid;
    else
      a = mid + 1;
  }
  const DenseStep& st = steps[a];
  const double th = (s - st.s0) / (st.s1 - st.s0);
  const double th1 = 1.0 - th;
  return st.rc1 +
         th * (st.rc2 + th1 * (st.rc3 + th * (st.rc4 + th1 * st.rc5)));
}

Vec Geodesic::point(double s) const { return state(s).head(dim()); }
Vec Geodesic::tangent(double s) const { return state(s).tail(dim()); }

Geodesic integrate_geodesic(const MetricPtr& m, const Vec& x, const Vec& xi,
                            double s_end, const GeoOptions& opt) {
  const int d = m->dim;
  Geodesic geo;
  geo.metric = m;
  geo.x0 = x;
  geo.xi0 = xi;

  const double dir = (s_end >= 0) ? 1.0 : -1.0;
  Vec z(2 * d);
  z << x, xi;
  double s = 0.0;
  double h = dir * std::abs(opt.h_init);
  if (opt.h_max > 0) h = dir * std::min(std::abs(h), opt.h_max);
  if (s_end == 0.0) {
    // degenerate request: store a single constant step
    DenseStep st;
    st.s0 = 0;
    st.s1 = 0;
    st.rc1 = z;
    st.rc2 = st.rc3 = st.rc4 = st.rc5 = Vec::Zero(2 * d);
    geo.steps.push_back(st);
    return geo;
  }

  Vec k1 = geodesic_rhs(*m, z);
  int n_steps = 0;
  while (dir * (s_end - s) > 1e-14 * std::abs(s_end)) {
    if (++n_steps > opt.max_steps)
      throw std::runtime_error("integrate_geodesic: step limit exceeded");
    if (dir * (s + h - s_end) > 0) h = s_end - s;

    const Vec k2 = geodesic_rhs(*m, z + h * (kA21 * k1));
    const Vec k3 = geodesic_rhs(*m, z + h * (kA31 * k1 + kA32 * k2));
    const Vec k4 = geodesic_rhs(*m, z + h * (kA41 * k1 + kA42 * k2 + kA43 * k3));
    const Vec k5 = geodesic_rhs(
        *m, z + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4));
    const Vec k6 = geodesic_rhs(
        *m,
        z + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5));
    const Vec z1 =
        z + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    const Vec k7 = geodesic_rhs(*m, z1);

    const Vec errv =
        h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);
    double err2 = 0.0;
    for (int i = 0; i < 2 * d; ++i) {
      const double sc =
          opt.atol + opt.rtol * std::max(std::abs(z(i)), std::abs(z1(i)));
      const double e = errv(i) / sc;
      err2 += e * e;
    }
    const double err = std::sqrt(err2 / (2 * d));

    if (err <= 1.0) {
      DenseStep st;
      st.s0 = s;
      st.s1 = s + h;
      st.rc1 = z;
      const Vec ydiff = z1 - z;
      st.rc2 = ydiff;
      const Vec bspl = h * k1 - ydiff;
      st.rc3 = bspl;
      st.rc4 = ydiff - h * k7 - bspl;
      st.rc5 = h * (kD1 * k1 + kD3 * k3 + kD4 * k4 + kD5 * k5 + kD6 * k6 +
                    kD7 * k7);
      geo.steps.push_back(st);

      s += h;
      z = z1;
      k1 = k7;  // FSAL
      // monitor / repair null drift
      {
        const Vec xs = z.head(d);
        Vec xis = z.tail(d);
        const double q = m->inner(xs, xis, xis);
        geo.null_drift_max = std::max(
            geo.null_drift_max, std::abs(q) / std::max(xis.squaredNorm(), 1e-300));
        if (opt.renull) {
          xis = renull_tangent(*m, xs, xis);
          z.tail(d) = xis;
          k1 = geodesic_rhs(*m, z);
        }
      }
    }
    const double fac =
        std::clamp(0.9 * std::pow(std::max(err, 1e-12), -0.2), 0.2, 5.0);
    h *= fac;
    if (opt.h_max > 0 && std::abs(h) > opt.h_max) h = dir * opt.h_max;
  }

  geo.s_min = std::min(0.0, s_end);
  geo.s_max = std::max(0.0, s_end);
  if (s_end < 0) std::reverse(geo.steps.begin(), geo.steps.end());
  return geo;
}

Geodesic integrate_bidirectional(const MetricPtr& m, const Vec& x,
                                 const Vec& xi, double s_back, double s_fwd,
                                 const GeoOptions& opt) {
  if (s_back > 0 || s_fwd < 0)
    throw std::invalid_argument("integrate_bidirectional: need s_back<=0<=s_fwd");
  Geodesic fwd = integrate_geodesic(m, x, xi, s_fwd, opt);
  if (s_back == 0.0) return fwd;
  Geodesic back = integrate_geodesic(m, x, xi, s_back, opt);
  Geodesic geo;
  geo.metric = m;
  geo.x0 = x;
  geo.xi0 = xi;
  geo.s_min = s_back;
  geo.s_max = s_fwd;
  geo.null_drift_max = std::max(fwd.null_drift_max, back.null_drift_max);
  geo.steps = back.steps;  // already sorted ascending after reversal
  geo.steps.insert(geo.steps.end(), fwd.steps.begin(), fwd.steps.end());
  return geo;
}

double exit_time(const Geodesic& geo, const Box& K) {
  if (!K.contains(geo.point(0.0))) return 0.0;
  // walk step ends forward from s=0, find the final inside->outside crossing
  double last_inside = 0.0;
  double first_outside = -1.0;
  bool outside_seen = false;
  for (const DenseStep& st : geo.steps) {
    const double hi = std::max(st.s0, st.s1);
    if (hi <= 0) continue;
    if (K.contains(geo.point(hi))) {
      last_inside = hi;
      outside_seen = false;  // re-entered: reset
    } else if (!outside_seen) {
      first_outside = hi;
      outside_seen = true;
    }
  }
  if (!outside_seen)
    throw std::runtime_error("exit_time: trace never leaves the box");
  double lo = last_inside, hi = std::max(first_outside, last_inside + 1e-12);
  // ensure predicate(hi) = outside
  while (K.contains(geo.point(hi))) {
    hi = std::min(geo.s_max, hi + (hi - lo) + 1e-9);
    if (hi >= geo.s_max) break;
  }
  auto outside = [&](double s) { return !K.contains(geo.point(s)); };
  return bisect_switch(outside, lo, hi, 60);
}

double exit_time(const MetricPtr& m, const Vec& x, const Vec& xi, const Box& K,
                 double s_cap, const GeoOptions& opt_in) {
  GeoOptions opt = opt_in;
  const double diam = K.diameter();
  if (opt.h_max <= 0) opt.h_max = std::max(diam / 20.0, 1e-3);
  if (s_cap <= 0)
    s_cap = 40.0 * (diam + 1.0) / std::max(xi.norm(), 1e-12);
  const Geodesic geo = integrate_geodesic(m, x, xi, s_cap, opt);
  return exit_time(geo, K);
}

// -------------------------------------------------------- curvature ---------
std::vector<std::vector<Mat>> riemann(const Metric& m, const Vec& x,
                                      double h_R) {
  const int d = m.dim;
  // dGamma[k][i] = d/dx^k Gamma^i at x (matrix over (j,l))
  std::vector<std::vector<Mat>> dgamma(d);
  Vec xp = x, xm = x;
  for (int k = 0; k < d; ++k) {
    xp(k) = x(k) + h_R;
    xm(k) = x(k) - h_R;
    const auto gp = m.christoffel(xp);
    const auto gm = m.christoffel(xm);
    dgamma[k].resize(d);
    for (int i = 0; i < d; ++i) dgamma[k][i] = (gp[i] - gm[i]) / (2.0 * h_R);
    xp(k) = x(k);
    xm(k) = x(k);
  }
  const auto gam = m.christoffel(x);
  std::vector<std::vector<Mat>> R(d, std::vector<Mat>(d, Mat::Zero(d, d)));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
          double v = dgamma[k][i](l, j) - dgamma[l][i](k, j);
          for (int mm = 0; mm < d; ++mm)
            v += gam[i](k, mm) * gam[mm](l, j) - gam[i](l, mm) * gam[mm](k, j);
          R[i][j](k, l) = v;
        }
  return R;
}

std::vector<Vec> jacobi_field(const Geodesic& geo, const Vec& J0,
                              const Vec& dJ0,
                              const std::vector<double>& svals) {
  const Metric& m = *geo.metric;
  const int d = m.dim;
  auto rhs = [&](double s, const Vec& y) {
    const Vec x = geo.point(s);
    const Vec xi = geo.tangent(s);
    const auto R = riemann(m, x);
    Vec dy(2 * d);
    dy.head(d) = y.tail(d);
    for (int i = 0; i < d; ++i) {
      // J''^i = -R^i_{jkl} xi^j J^k xi^l
      double a = 0.0;
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l)
            a -= R[i][j](k, l) * xi(j) * y(k) * xi(l);
      dy(d + i) = a;
    }
    return dy;
  };
  // classical RK4 marched through the requested sample points
  std::vector<Vec> out;
  Vec y(2 * d);
  y << J0, dJ0;
  double s = 0.0;
  for (double st : svals) {
    const double span = st - s;
    const int nsub = std::max(1, static_cast<int>(std::ceil(std::abs(span) / 0.01)));
    const double h = span / nsub;
    for (int q = 0; q < nsub; ++q) {
      const Vec a1 = rhs(s, y);
      const Vec a2 = rhs(s + h / 2, y + (h / 2) * a1);
      const Vec a3 = rhs(s + h / 2, y + (h / 2) * a2);
      const Vec a4 = rhs(s + h, y + h * a3);
      y += (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4);
      s += h;
    }
    out.push_back(y.head(d));
  }
  return out;
}

std::optional<double> first_conjugate_zero(const Geodesic& geo, const Vec& w,
                                           double s_max, int samples) {
  const Vec wh = w / w.norm();
  std::vector<double> svals;
  for (int i = 1; i <= samples; ++i) svals.push_back(s_max * i / samples);
  const auto J = jacobi_field(geo, Vec::Zero(geo.dim()), w, svals);
  double prev_s = svals[0];
  double prev_j = J[0].dot(wh);
  for (std::size_t i = 1; i < svals.size(); ++i) {
    const double cur_j = J[i].dot(wh);
    if (prev_j > 0 && cur_j <= 0) {
      const double t = prev_j / (prev_j - cur_j);
      return prev_s + t * (svals[i] - prev_s);
    }
    prev_s = svals[i];
    prev_j = cur_j;
  }
  return std::nullopt;
}

}  // namespace gbeam
