#pragma once
// Null Fermi charts along a lightlike geodesic and the transverse Riccati
// system driving Gaussian-beam phases.
//
// Chart conventions: coordinates (s, y^1, ..., y^n) with the axis at y = 0.
// On the axis the pulled-back metric is the normal form
//   G = ds (x) dy^1 + dy^1 (x) ds + sum_{a>=2} dy^a (x) dy^a
// and all first derivatives of G vanish.  The frame is (gdot, N, E_2..E_n)
// with <gdot,N> = 1, N null, E_a orthonormal spacelike, all parallel along
// the axis.

#include <memory>
#include <vector>

#include "gbeam/manifold.hpp"
#include "gbeam/geodesic.hpp"
#include "gbeam/util.hpp"

namespace gbeam {

// Null frame at a single point: gdot null future-directed, N the conjugate
// null vector, E spacelike orthonormal completing the basis.
struct NullFrame {
  Vec gdot, N;
  std::vector<Vec> E;
  // columns (gdot, N, E_2, ..., E_n)
  Mat as_matrix() const;
};

NullFrame build_null_frame(const MetricPtr& m, const Vec& x, const Vec& xi);

class FermiChart {
 public:
  // Builds the chart along geo over [s0, s1] (s0 may be negative if the
  // geodesic trace covers it).  ds controls the parallel-transport step.
  FermiChart(MetricPtr m, Geodesic geo, double s0, double s1,
             double ds = 1e-3);

  int n() const { return n_; }
  double s0() const { return s0_; }
  double s1() const { return s1_; }
  bool affine() const { return affine_; }
  const Geodesic& axis() const { return geo_; }

  // frame matrix at parameter s, columns (gdot, N, E_2..E_n)
  Mat frame(double s) const;

  // cached axis data at fixed s; lets quadratures over many y values share
  // the Christoffel evaluations along the axis
  struct Slice {
    double s = 0.0;
    Vec gamma, gdot;
    Mat E, Ed;                  // frame and its s-derivative
    std::vector<Mat> Gam;       // Christoffel symbols at gamma(s)
    std::vector<Mat> dGam;      // d Gamma / ds along the axis
    bool affine = false;
  };
  Slice slice(double s) const;

  // chart map and its Jacobian d x / d(s, y)
  Vec to_manifold(double s, const Vec& y) const;
  Mat jacobian(double s, const Vec& y) const;
  Vec to_manifold(const Slice& sl, const Vec& y) const;
  Mat jacobian(const Slice& sl, const Vec& y) const;
  // chart inverse by Newton iteration; returns false if no convergence.
  // (s, y) are used as the initial guess on entry.
  bool from_manifold(const Vec& x, double& s, Vec& y) const;

  // pulled-back metric G_ab(s, y) and its inverse
  Mat chart_metric(double s, const Vec& y) const;
  Mat chart_metric_inv(double s, const Vec& y) const;
  Mat chart_metric(const Slice& sl, const Vec& y) const;

  // transverse curvature data D_jk(s) = 1/4 d^2 G^11 / dy^j dy^k at y=0
  Mat Dmat(double s) const;

 private:
  MetricPtr m_;
  Geodesic geo_;
  double s0_, s1_, ds_;
  int n_;
  bool affine_ = false;
  std::vector<double> sgrid_;
  std::vector<Mat> frames_, dframes_;  // E(s_k) and E'(s_k) for Hermite interp
  Mat frame_deriv(double s, const Mat& E) const;
};

// Transverse Riccati system  Y' = C Z,  Z' = -D(s) Y  with
// C = diag(0, 2, ..., 2); H = Z Y^{-1} is the phase Hessian and
// amp = (det Y)^{-1/2} the leading amplitude (continuous branch).
struct RiccatiSolution {
  std::vector<double> s;
  std::vector<CMat> Y, Z, dY, dZ;  // samples and derivatives
  std::vector<Mat> Dsamp;          // D(s) at the samples
  std::vector<double> logdet_im;   // unwrapped Im log det Y
  double det_imH0 = 0.0;           // det Im H at the init point (conserved)

  CMat Yat(double s) const;
  CMat Zat(double s) const;
  CMat Hat(double s) const;          // Z Y^{-1}
  Mat Dat(double s) const;           // linear interpolation of D
  CMat Hprime(double s) const;       // -D - H C H
  cplx amp(double s) const;          // (det Y)^{-1/2}, continuous branch
  cplx amp_deriv(double s) const;    // -1/2 tr(C H) amp
  double det_imH(double s) const;    // det Im H(s)
  double min_im_eig() const;         // min eigenvalue of Im H over samples
};

RiccatiSolution solve_riccati(const FermiChart& chart, double s0, double s1,
                              const CMat& Y0, const CMat& Z0,
                              double h = 0.01);

// Same system with the data (Y0, Z0) imposed at an interior parameter
// s_init in [s0, s1]; integrates both ways and merges into one ascending
// solution.  Used for beams whose Hessian is prescribed at an interaction
// point rather than at the chart start.
RiccatiSolution solve_riccati_from(const FermiChart& chart, double s0,
                                   double s1, double s_init, const CMat& Y0,
                                   const CMat& Z0, double h = 0.01);

}  // namespace gbeam
