#pragma once
// Finite-difference solver for the scalar semilinear wave equation
//   box_g u + N(u) = f,   N(u) = sum_p a_p u^p,
// on metrics with g_{0i} = 0 (minkowski / conformal / warped product), with
// zero initial data and homogeneous Dirichlet walls.  Leapfrog in time with
// a symmetric divergence-form spatial stencil: for time-independent metrics
// the discrete retarded and advanced solves are exact adjoints of each other
// with respect to the metric volume pairing, so Green reciprocity holds to
// roundoff on a fixed grid.

#include <functional>
#include <utility>
#include <vector>

#include "gbeam/manifold.hpp"

namespace gbeam {

// space-time source density f(t, xs) with xs the spatial point
using SpaceTimeFn = std::function<double(double, const Vec&)>;

// N(u) = sum of coeff * u^power terms
using Nonlinearity = std::vector<std::pair<int, double>>;

struct WaveDomain {
  Vec lo, hi;        // spatial box
  int nx = 200;      // grid points per axis
  double t0 = 0.0;
  double t1 = 2.0;
  double cfl = 0.35;
  int store_stride = 1;  // keep every k-th time level (last level always kept)
};

class WaveField {
 public:
  int n = 0;                    // spatial dimension
  Vec lo, hi;                   // spatial box
  std::vector<int> shape;       // points per axis
  std::vector<double> times;    // stored time levels (ascending)
  std::vector<std::vector<double>> data;  // data[k][flat spatial index]
  std::vector<double> cellw;    // sqrt|g| * prod(dx) per spatial index

  double dx(int axis) const;
  size_t flat(const std::vector<int>& idx) const;
  double value(double t, const Vec& xs) const;  // space-time interpolation
  double max_abs() const;

  // integral over the stored levels (trapezoid in time) of u * h * dV with
  // dV the metric volume element
  double integrate_against(const SpaceTimeFn& h) const;

  // integral of the product of the given fields against the metric volume;
  // the fields must share grid and time levels
  static double pair_integral(const std::vector<const WaveField*>& fields);
};

class WaveSolver {
 public:
  WaveSolver(MetricPtr m, WaveDomain dom);

  const WaveDomain& domain() const { return dom_; }
  double dt() const { return dt_; }
  int steps() const { return nt_; }

  // retarded solve (zero data in the past) or, with adjoint = true, the
  // advanced solve (zero data in the future, stepping backward)
  WaveField solve(const SpaceTimeFn& f, const Nonlinearity& nl = {},
                  bool adjoint = false) const;

 private:
  MetricPtr m_;
  WaveDomain dom_;
  int n_;
  std::vector<int> shape_;
  double dt_ = 0.0;
  int nt_ = 0;
  bool static_metric_ = false;
  // static coefficient caches (filled when the metric is time-independent)
  std::vector<double> alpha_;   // -g^{00} sqrt|g|
  std::vector<double> wvol_;    // sqrt|g|
  std::vector<std::vector<double>> beta_;  // per axis, right-half-cell
                                           // g^{ii} sqrt|g|

  double dxa(int axis) const;
  void coefficients(double t, std::vector<double>& alpha,
                    std::vector<double>& wvol,
                    std::vector<std::vector<double>>& beta) const;
};

// amplitude * exp(-((t-tc)^2 + |xs-xc|^2) / (2 sigma^2))
SpaceTimeFn spacetime_blob(double amplitude, double tc, Vec xc, double sigma);

}  // namespace gbeam
