// ---------------------------------------------------------------------------
// geodesic.hpp -- affine-parametrized geodesics by adaptive Dormand-Prince
// RK5(4)7M with the classical 4th-order dense-output interpolant, optional
// null-cone re-projection of the tangent, exit times from coordinate boxes,
// and curvature helpers (Riemann tensor, Jacobi fields).
// ---------------------------------------------------------------------------
#pragma once

#include <optional>

#include "gbeam/manifold.hpp"

namespace gbeam {

// ------------------------------------------------------------ options -------
struct GeoOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  bool renull = false;      // re-project tangent onto the null cone each step
  int max_steps = 200000;
  double h_init = 1e-3;
  double h_max = 0.0;       // maximum step size (0 = unlimited)
};

// ------------------------------------------------------- dense solution -----
// One accepted step [s0,s1] with the dopri5 continuous-extension coefficients.
struct DenseStep {
  double s0, s1;
  Vec rc1, rc2, rc3, rc4, rc5;  // state-sized coefficient vectors
};

class Geodesic {
 public:
  MetricPtr metric;
  Vec x0, xi0;          // initial point / tangent (state at s = 0)
  double s_min = 0.0;   // covered parameter range [s_min, s_max]
  double s_max = 0.0;
  double null_drift_max = 0.0;  // max |<xi,xi>|/|xi|^2 observed at step ends
  std::vector<DenseStep> steps;  // sorted by increasing s

  int dim() const { return metric->dim; }
  Vec state(double s) const;    // (x, xi), size 2*dim
  Vec point(double s) const;
  Vec tangent(double s) const;
};

// Integrate from (x, xi) over [0, s_end] (s_end may be negative).
Geodesic integrate_geodesic(const MetricPtr& m, const Vec& x, const Vec& xi,
                            double s_end, const GeoOptions& opt = {});

// Integrate over [s_back, s_fwd] with s_back <= 0 <= s_fwd (merged trace).
Geodesic integrate_bidirectional(const MetricPtr& m, const Vec& x,
                                 const Vec& xi, double s_back, double s_fwd,
                                 const GeoOptions& opt = {});

// ------------------------------------------------------------ boxes ---------
struct Box {
  Vec lo, hi;
  bool contains(const Vec& x, double pad = 0.0) const {
    for (int i = 0; i < x.size(); ++i)
      if (x(i) < lo(i) - pad || x(i) > hi(i) + pad) return false;
    return true;
  }
  double diameter() const { return (hi - lo).norm(); }
  static Box centered(const Vec& c, double r) {
    Box b;
    b.lo = c.array() - r;
    b.hi = c.array() + r;
    return b;
  }
};

// Exit time R(v) = sup{ s >= 0 : gamma_v(s) in K }.  Integrates until the ray
// has left K with margin (or s_cap), then brackets the last inside->outside
// crossing by bisection on the dense trace.  Throws if the ray has not left K
// by s_cap.  Returns 0 when the start point lies outside K.
double exit_time(const MetricPtr& m, const Vec& x, const Vec& xi, const Box& K,
                 double s_cap = 0.0, const GeoOptions& opt = {});

// Same, reusing an already-integrated trace covering the exit.
double exit_time(const Geodesic& geo, const Box& K);

// -------------------------------------------------------- curvature ---------
// Riemann tensor R[i][j](k,l) = R^i_{jkl} by central differences of the
// Christoffel symbols (step h_R).
std::vector<std::vector<Mat>> riemann(const Metric& m, const Vec& x,
                                      double h_R = 1e-4);

// Jacobi field J'' + R(J, gdot)gdot = 0 along a geodesic trace, with J(0)=J0,
// J'(0)=dJ0; returns J sampled at the given parameter values.
std::vector<Vec> jacobi_field(const Geodesic& geo, const Vec& J0,
                              const Vec& dJ0, const std::vector<double>& svals);

// First zero crossing (in |J| along a transverse component) of the Jacobi
// field with J(0)=0, J'(0)=w on (0, s_max]; nullopt if none found.
std::optional<double> first_conjugate_zero(const Geodesic& geo, const Vec& w,
                                           double s_max, int samples = 400);

}  // namespace gbeam
