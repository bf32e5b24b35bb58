// ---------------------------------------------------------------------------
// manifold.hpp -- Lorentzian metric families on R^{1+n}, signature (-,+,..,+):
//   * minkowski
//   * conformal(minkowski, c)          g = c * eta, scalar field c > 0
//   * warped_product(c, c_s)           g = -c dx0^2 + c_s * delta
//   * perturbed_minkowski              g = eta + compactly supported h(x)
// plus pointwise operations: derivatives, Christoffel symbols, causal
// classification with a fixed time orientation, and null re-projection.
// ---------------------------------------------------------------------------
#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbeam/util.hpp"

namespace gbeam {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// --------------------------------------------------------- scalar fields ----
// Small catalogue of smooth positive scalar fields used as conformal factors
// and warped-product coefficients.  Values and gradients are analytic.
struct ScalarField {
  enum class Kind { Constant, GaussianBump, SpatialBump, ExpLinear };
  Kind kind = Kind::Constant;
  double c0 = 1.0;      // constant part / base level
  double amp = 0.0;     // bump amplitude
  Vec center;           // bump center (spacetime point)
  double width = 1.0;   // bump width
  Vec klin;             // exp(k . x)

  static ScalarField constant(double v);
  static ScalarField gaussian_bump(double base, double amplitude, Vec c, double w);
  // bump in the spatial coordinates only (time-independent field)
  static ScalarField spatial_bump(double base, double amplitude, Vec c, double w);
  static ScalarField exp_linear(Vec k);

  double value(const Vec& x) const;
  Vec grad(const Vec& x) const;
  bool time_independent() const;
};

// ------------------------------------------------------------ causal tags ---
enum class CausalClass { Timelike, Null, Spacelike };

// ------------------------------------------------------------ metric base ---
class Metric {
 public:
  explicit Metric(int spatial_dim)
      : n(spatial_dim), dim(spatial_dim + 1) {
    if (spatial_dim < 1) throw std::invalid_argument("Metric: need n >= 1");
  }
  virtual ~Metric() = default;

  int n;    // spatial dimension
  int dim;  // = n + 1
  double fd_step = 1e-5;    // step for finite-difference metric derivatives
  double eps_null = 1e-9;   // relative tolerance for null classification

  virtual std::string family() const = 0;
  virtual Mat metric_at(const Vec& x) const = 0;
  // d[k](i,j) = d g_ij / d x^k ; default central differences with fd_step.
  virtual std::vector<Mat> metric_deriv(const Vec& x) const;
  virtual bool time_independent() const { return false; }
  // Smallest coordinate scale on which the metric varies, or 0 when there is
  // no such scale.  Adaptive integrators cap their step size by this so that
  // thin features (e.g. a compactly supported curvature pulse) cannot fall
  // between the stages of an accepted step.
  virtual double feature_scale() const { return 0.0; }

  Mat inverse_metric(const Vec& x) const { return metric_at(x).inverse(); }
  double sqrt_abs_det(const Vec& x) const {
    return std::sqrt(std::abs(metric_at(x).determinant()));
  }
  // Gamma[i](j,k) = Christoffel symbol Gamma^i_{jk}.
  std::vector<Mat> christoffel(const Vec& x) const;

  double inner(const Vec& x, const Vec& u, const Vec& w) const {
    return u.dot(metric_at(x) * w);
  }

  // Future-directed unit timelike reference vector (time orientation).  All
  // catalogue members keep d/dx0 timelike, which pins the orientation.
  Vec time_axis(const Vec& x) const;

  CausalClass classify(const Vec& x, const Vec& xi) const;
  bool is_future_causal(const Vec& x, const Vec& xi) const;

  // Adjust xi^0 (keeping the spatial part fixed) so that <xi,xi> = 0 with the
  // future-directed root.  Throws if the spatial part vanishes.
  Vec project_null(const Vec& x, const Vec& xi) const;
};

using MetricPtr = std::shared_ptr<const Metric>;

// --------------------------------------------------------------- families ---
class MinkowskiMetric final : public Metric {
 public:
  explicit MinkowskiMetric(int spatial_dim) : Metric(spatial_dim) {}
  std::string family() const override { return "minkowski"; }
  Mat metric_at(const Vec& x) const override;
  std::vector<Mat> metric_deriv(const Vec& x) const override;
  bool time_independent() const override { return true; }
};

class ConformalMetric final : public Metric {
 public:
  ConformalMetric(int spatial_dim, ScalarField c)
      : Metric(spatial_dim), cfield(std::move(c)) {}
  std::string family() const override { return "conformal"; }
  Mat metric_at(const Vec& x) const override;
  std::vector<Mat> metric_deriv(const Vec& x) const override;
  bool time_independent() const override { return cfield.time_independent(); }
  ScalarField cfield;
};

class WarpedProductMetric final : public Metric {
 public:
  WarpedProductMetric(int spatial_dim, ScalarField lapse, ScalarField spatial)
      : Metric(spatial_dim), cfield(std::move(lapse)), sfield(std::move(spatial)) {}
  std::string family() const override { return "warped_product"; }
  Mat metric_at(const Vec& x) const override;
  std::vector<Mat> metric_deriv(const Vec& x) const override;
  bool time_independent() const override {
    return cfield.time_independent() && sfield.time_independent();
  }
  ScalarField cfield;  // -c(x) dx0^2
  ScalarField sfield;  // c_s(x) * delta_ij
};

// Compactly supported symmetric perturbation of eta.  The stock instance is a
// sandwich-wave profile focusing transverse rays:
//   g = eta + A * w(u) * q(y) * p(v) * M,  u = t - x^1, v = t + x^1,
//   M = [[1,-1,0],[-1,1,0],[0,0,0]] (in the (t,x^1,y)-block sense),
// with w a bump in u, q(y) = y^2 * cutoff(|y|), p a wide plateau cutoff in v.
// det g = -1 identically.  Requires n >= 2.
class PerturbedMinkowskiMetric final : public Metric {
 public:
  PerturbedMinkowskiMetric(int spatial_dim, double amplitude, double u_center,
                           double u_halfwidth, double y_cut, double v_halfwidth);
  std::string family() const override { return "perturbed_minkowski"; }
  Mat metric_at(const Vec& x) const override;
  std::vector<Mat> metric_deriv(const Vec& x) const override;

  double A;        // amplitude
  double u0;       // bump center in u
  double uw;       // bump half-width in u
  double ycut;     // transverse cutoff radius
  double vw;       // plateau half-width in v (support [-2 vw, 2 vw])

  // profile pieces (exposed for the Jacobi-equation oracle in tests)
  double wprof(double u) const;       // bump in u, integral ~ O(uw)
  double qprof(double y) const;       // y^2 near 0, cut off at |y| ~ ycut
  double d2qprof0() const { return 2.0; }
  double pprof(double v) const;       // plateau cutoff in v
};

// ----------------------------------------------------- family constructors --
MetricPtr make_minkowski(int n);
MetricPtr make_conformal_constant(int n, double c);
MetricPtr make_conformal(int n, const ScalarField& c);
MetricPtr make_warped_product(int n, const ScalarField& lapse,
                              const ScalarField& spatial);
MetricPtr make_pp_bump(int n, double amplitude, double u_center,
                       double u_halfwidth, double y_cut, double v_halfwidth);

}  // namespace gbeam
