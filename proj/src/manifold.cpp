#include "gbeam/manifold.hpp"

namespace gbeam {

// --------------------------------------------------------- scalar fields ----
ScalarField ScalarField::constant(double v) {
  ScalarField f;
  f.kind = Kind::Constant;
  f.c0 = v;
  return f;
}

ScalarField ScalarField::gaussian_bump(double base, double amplitude, Vec c,
                                       double w) {
  ScalarField f;
  f.kind = Kind::GaussianBump;
  f.c0 = base;
  f.amp = amplitude;
  f.center = std::move(c);
  f.width = w;
  return f;
}

ScalarField ScalarField::exp_linear(Vec k) {
  ScalarField f;
  f.kind = Kind::ExpLinear;
  f.klin = std::move(k);
  return f;
}

ScalarField ScalarField::spatial_bump(double base, double amplitude, Vec c,
                                      double w) {
  ScalarField f;
  f.kind = Kind::SpatialBump;
  f.c0 = base;
  f.amp = amplitude;
  f.center = std::move(c);
  f.width = w;
  return f;
}

double ScalarField::value(const Vec& x) const {
  switch (kind) {
    case Kind::Constant:
      return c0;
    case Kind::GaussianBump: {
      const double r2 = (x - center).squaredNorm();
      return c0 + amp * std::exp(-r2 / (width * width));
    }
    case Kind::SpatialBump: {
      const int n = static_cast<int>(x.size()) - 1;
      const double r2 = (x.tail(n) - center.tail(n)).squaredNorm();
      return c0 + amp * std::exp(-r2 / (width * width));
    }
    case Kind::ExpLinear:
      return std::exp(klin.dot(x));
  }
  throw std::logic_error("ScalarField::value: bad kind");
}

Vec ScalarField::grad(const Vec& x) const {
  switch (kind) {
    case Kind::Constant:
      return Vec::Zero(x.size());
    case Kind::GaussianBump: {
      const Vec d = x - center;
      const double e = amp * std::exp(-d.squaredNorm() / (width * width));
      return (-2.0 / (width * width)) * e * d;
    }
    case Kind::SpatialBump: {
      const int n = static_cast<int>(x.size()) - 1;
      Vec d = Vec::Zero(x.size());
      d.tail(n) = x.tail(n) - center.tail(n);
      const double e = amp * std::exp(-d.squaredNorm() / (width * width));
      return (-2.0 / (width * width)) * e * d;
    }
    case Kind::ExpLinear:
      return std::exp(klin.dot(x)) * klin;
  }
  throw std::logic_error("ScalarField::grad: bad kind");
}

bool ScalarField::time_independent() const {
  switch (kind) {
    case Kind::Constant:
    case Kind::SpatialBump:
      return true;
    case Kind::GaussianBump:
      return false;
    case Kind::ExpLinear:
      return klin.size() == 0 || klin(0) == 0.0;
  }
  return false;
}

// ------------------------------------------------------------ metric base ---
std::vector<Mat> Metric::metric_deriv(const Vec& x) const {
  std::vector<Mat> d(dim);
  Vec xp = x, xm = x;
  for (int k = 0; k < dim; ++k) {
    xp(k) = x(k) + fd_step;
    xm(k) = x(k) - fd_step;
    d[k] = (metric_at(xp) - metric_at(xm)) / (2.0 * fd_step);
    xp(k) = x(k);
    xm(k) = x(k);
  }
  return d;
}

std::vector<Mat> Metric::christoffel(const Vec& x) const {
  const Mat ginv = inverse_metric(x);
  const std::vector<Mat> dg = metric_deriv(x);
  std::vector<Mat> gamma(dim, Mat::Zero(dim, dim));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int k = j; k < dim; ++k) {
        double s = 0.0;
        for (int l = 0; l < dim; ++l)
          s += ginv(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
        gamma[i](j, k) = 0.5 * s;
        gamma[i](k, j) = gamma[i](j, k);
      }
  return gamma;
}

Vec Metric::time_axis(const Vec& x) const {
  const Mat g = metric_at(x);
  if (g(0, 0) >= 0)
    throw std::runtime_error("Metric::time_axis: d/dx0 not timelike here");
  Vec t = Vec::Zero(dim);
  t(0) = 1.0 / std::sqrt(-g(0, 0));
  return t;
}

CausalClass Metric::classify(const Vec& x, const Vec& xi) const {
  const double q = inner(x, xi, xi);
  const double scale = std::max(xi.squaredNorm(), 1e-300);
  const double qn = q / scale;
  if (std::abs(qn) <= eps_null) return CausalClass::Null;
  return qn < 0 ? CausalClass::Timelike : CausalClass::Spacelike;
}

bool Metric::is_future_causal(const Vec& x, const Vec& xi) const {
  if (classify(x, xi) == CausalClass::Spacelike) return false;
  return inner(x, xi, time_axis(x)) < 0;
}

Vec Metric::project_null(const Vec& x, const Vec& xi) const {
  const Mat g = metric_at(x);
  const double a2 = g(0, 0);
  double b = 0.0, c = 0.0;
  for (int i = 1; i < dim; ++i) {
    b += g(0, i) * xi(i);
    for (int j = 1; j < dim; ++j) c += g(i, j) * xi(i) * xi(j);
  }
  if (c <= 0)
    throw std::runtime_error("project_null: spatial part not spacelike");
  const double disc = b * b - a2 * c;
  if (disc < 0) throw std::runtime_error("project_null: no real root");
  const double r1 = (-b + std::sqrt(disc)) / a2;
  const double r2 = (-b - std::sqrt(disc)) / a2;
  Vec out = xi;
  for (double r : {r1, r2}) {
    out(0) = r;
    if (inner(x, out, time_axis(x)) < 0) return out;  // future-directed root
  }
  throw std::runtime_error("project_null: no future root");
}

// --------------------------------------------------------------- families ---
Mat MinkowskiMetric::metric_at(const Vec&) const {
  Mat g = Mat::Identity(dim, dim);
  g(0, 0) = -1.0;
  return g;
}

std::vector<Mat> MinkowskiMetric::metric_deriv(const Vec&) const {
  return std::vector<Mat>(dim, Mat::Zero(dim, dim));
}

Mat ConformalMetric::metric_at(const Vec& x) const {
  Mat g = Mat::Identity(dim, dim);
  g(0, 0) = -1.0;
  return cfield.value(x) * g;
}

std::vector<Mat> ConformalMetric::metric_deriv(const Vec& x) const {
  Mat eta = Mat::Identity(dim, dim);
  eta(0, 0) = -1.0;
  const Vec dc = cfield.grad(x);
  std::vector<Mat> d(dim);
  for (int k = 0; k < dim; ++k) d[k] = dc(k) * eta;
  return d;
}

Mat WarpedProductMetric::metric_at(const Vec& x) const {
  Mat g = sfield.value(x) * Mat::Identity(dim, dim);
  g(0, 0) = -cfield.value(x);
  return g;
}

std::vector<Mat> WarpedProductMetric::metric_deriv(const Vec& x) const {
  const Vec dc = cfield.grad(x);
  const Vec ds = sfield.grad(x);
  std::vector<Mat> d(dim);
  for (int k = 0; k < dim; ++k) {
    d[k] = ds(k) * Mat::Identity(dim, dim);
    d[k](0, 0) = -dc(k);
  }
  return d;
}

PerturbedMinkowskiMetric::PerturbedMinkowskiMetric(int spatial_dim,
                                                   double amplitude,
                                                   double u_center,
                                                   double u_halfwidth,
                                                   double y_cut,
                                                   double v_halfwidth)
    : Metric(spatial_dim),
      A(amplitude),
      u0(u_center),
      uw(u_halfwidth),
      ycut(y_cut),
      vw(v_halfwidth) {
  if (spatial_dim < 2)
    throw std::invalid_argument("PerturbedMinkowskiMetric: need n >= 2");
  // keep d/dx0 timelike everywhere: |A| * max(w) * max(q) < 1
  if (std::abs(A) * ycut * ycut >= 0.9)
    throw std::invalid_argument(
        "PerturbedMinkowskiMetric: amplitude too large for fixed orientation");
}

double PerturbedMinkowskiMetric::wprof(double u) const {
  const double t = (u - u0) / uw;
  if (std::abs(t) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

double PerturbedMinkowskiMetric::qprof(double y) const {
  return y * y * smoothstep_cinf(std::abs(y), 0.5 * ycut, ycut);
}

double PerturbedMinkowskiMetric::pprof(double v) const {
  return smoothstep_cinf(std::abs(v), vw, 2.0 * vw);
}

Mat PerturbedMinkowskiMetric::metric_at(const Vec& x) const {
  Mat g = Mat::Identity(dim, dim);
  g(0, 0) = -1.0;
  const double u = x(0) - x(1);
  const double v = x(0) + x(1);
  double y2 = 0.0;
  for (int i = 2; i < dim; ++i) y2 += x(i) * x(i);
  const double y = std::sqrt(y2);
  const double H = A * wprof(u) * qprof(y) * pprof(v);
  if (H != 0.0) {
    g(0, 0) += H;
    g(0, 1) -= H;
    g(1, 0) -= H;
    g(1, 1) += H;
  }
  return g;
}

std::vector<Mat> PerturbedMinkowskiMetric::metric_deriv(const Vec& x) const {
  return Metric::metric_deriv(x);  // finite differences on the smooth profile
}

// ----------------------------------------------------- family constructors --
MetricPtr make_minkowski(int n) { return std::make_shared<MinkowskiMetric>(n); }

MetricPtr make_conformal_constant(int n, double c) {
  return std::make_shared<ConformalMetric>(n, ScalarField::constant(c));
}

MetricPtr make_conformal(int n, const ScalarField& c) {
  return std::make_shared<ConformalMetric>(n, c);
}

MetricPtr make_warped_product(int n, const ScalarField& lapse,
                              const ScalarField& spatial) {
  return std::make_shared<WarpedProductMetric>(n, lapse, spatial);
}

MetricPtr make_pp_bump(int n, double amplitude, double u_center,
                       double u_halfwidth, double y_cut, double v_halfwidth) {
  return std::make_shared<PerturbedMinkowskiMetric>(n, amplitude, u_center,
                                                    u_halfwidth, y_cut,
                                                    v_halfwidth);
}

}  // namespace gbeam
