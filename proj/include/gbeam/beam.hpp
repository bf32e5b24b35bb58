#pragma once
// Gaussian beams: approximate high-frequency solutions of the wave equation
// concentrated along a null geodesic,
//   U(x) = exp(i lambda phi) a0(s) chi(|y| / delta'),
// with phi = y^1 + y^T H(s) y in the Fermi chart, H from the transverse
// Riccati system, and a0 = (det Y)^{-1/2}.  The wave-operator residual is
// evaluated semi-analytically: the oscillatory factor is handled in closed
// form and only smooth coefficient functions are differenced, so the cost
// and accuracy are uniform in lambda.

#include <functional>
#include <limits>
#include <memory>

#include "gbeam/fermi.hpp"

namespace gbeam {

struct BeamOptions {
  double lambda = 40.0;
  double delta_prime = 0.2;  // cutoff tube radius; chi = 1 for |y| <= dp/2
  double chart_ds = 1e-3;    // parallel-transport step for the chart
  double riccati_h = 0.01;   // Riccati integration step
  // Parameter where the Riccati data Y = I, Z = iI is imposed; NaN means the
  // chart start.  Beams meeting at a common point pin it there so the phase
  // Hessian at the meeting point is exactly i * I.
  double riccati_init_s = std::numeric_limits<double>::quiet_NaN();
};

// One-stop evaluation of the beam's smooth ingredients at a manifold point:
// phase, amplitude, and their spacetime gradients (chain-ruled through the
// chart map).  inside == false means x is outside the beam tube.
struct ChartEval {
  bool inside = false;
  double s = 0.0;
  Vec y;           // transverse chart coordinates
  cplx phi{0, 0};  // y^1 + y^T H(s) y
  CVec dphi;       // d phi / d x^mu
  cplx a{0, 0};    // a0(s) chi(|y|)
  CVec da;         // d a / d x^mu
};

class GaussianBeam {
 public:
  // beam along the null geodesic through (x0, xi0), chart over [s0, s1]
  GaussianBeam(MetricPtr m, const Vec& x0, const Vec& xi0, double s0,
               double s1, BeamOptions opt = {});

  const FermiChart& chart() const { return *chart_; }
  const RiccatiSolution& riccati() const { return ric_; }
  const BeamOptions& options() const { return opt_; }
  const MetricPtr& metric() const { return m_; }
  double s0() const { return chart_->s0(); }
  double s1() const { return chart_->s1(); }
  // frequency can be swept without rebuilding chart or Riccati data
  void set_lambda(double l) { opt_.lambda = l; }

  // chart-coordinate ingredients
  cplx phase(double s, const Vec& y) const;       // y^1 + y^T H y
  CVec dphase(double s, const Vec& y) const;      // d phi / d(s, y)
  cplx amp(double s, const Vec& y) const;         // a0(s) chi(|y|/dp)
  cplx value_chart(double s, const Vec& y) const; // e^{i lambda phi} amp

  // wave-operator residual (box U) at chart coordinates, semi-analytic
  cplx box_chart(double s, const Vec& y) const;

  // manifold-point evaluation; zero outside the tube.  The hinted variants
  // reuse (s,y) as a Newton warm start and update it.
  cplx value(const Vec& x) const;
  cplx value_hint(const Vec& x, double& s, Vec& y) const;
  // spacetime gradient dU/dx^mu (zero outside the tube)
  CVec gradient_hint(const Vec& x, double& s, Vec& y) const;
  // phase/amplitude pieces and their spacetime gradients at x
  ChartEval eval_hint(const Vec& x, double& s, Vec& y) const;

  // True if x resolves to chart coordinates inside the tube; outputs them.
  bool locate(const Vec& x, double& s, Vec& y) const;

  double cutoff(double r) const;  // chi(|y|) profile

 private:
  MetricPtr m_;
  BeamOptions opt_;
  std::shared_ptr<FermiChart> chart_;
  RiccatiSolution ric_;
  // affine fast path: x = P + Q * (s - s0, y)
  bool affine_ = false;
  Vec aff_P_;
  Mat aff_Qinv_;
  // Newton seeds along the axis for the generic chart inverse
  std::vector<std::pair<double, Vec>> seeds_;
};

// L2 norm of box U over the beam tube (chart quadrature; the transverse box
// adapts to the Gaussian core).  ny is the transverse points per axis.
double beam_residual_norm(const GaussianBeam& beam, int ns = 60, int ny = 80);

// Source construction: f = zp(x0) * box( zm(x0) * Re U ) with smooth time
// windows zm (1 in the past of [a,b], 0 after) and zp (bump equal to 1 on
// [a,b], supported slightly wider).  Returns its L2 norm over the tube.
struct SourceWindow {
  double zm_a = 0.0, zm_b = 0.3;   // zm transition interval in x^0
  double zp_a = -0.2, zp_b = 0.5;  // zp == 1 on [zp_a, zp_b]
  double zp_pad = 0.2;             // zp support pad on each side
};
double source_norm(const GaussianBeam& beam, const SourceWindow& w,
                   int ns = 120, int ny = 80);

// Pointwise Laplace-Beltrami operator by nested central differences in the
// ambient coordinates (validation oracle; accuracy degrades with frequency).
cplx laplace_beltrami_fd(const MetricPtr& m,
                         const std::function<cplx(const Vec&)>& u,
                         const Vec& x, double h);

}  // namespace gbeam
