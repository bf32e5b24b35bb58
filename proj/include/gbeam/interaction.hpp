#pragma once
// Four-beam interaction machinery: linear algebra of null spans, the
// combined phase of signed beams meeting at a point, stationary-phase
// limits with Richardson extrapolation, and quadrature evaluation of the
// semilinear and quasilinear interaction data.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "gbeam/beam.hpp"

namespace gbeam {

// ------------------------------------------------------------- null spans ---

// Coefficients of a linear dependence sum_j kappa_j xi_j = 0 for a list of
// 3 or 4 vectors.  independent == true means only the trivial combination
// exists (kappa left empty).  A pair of proportional inputs, or a nullspace
// of dimension >= 2, throws std::invalid_argument.  When the inputs are
// dependent and kappa(0) != 0, kappa is normalized so kappa(0) = 1.
struct SpanResult {
  bool independent = false;
  Vec kappa;
  double residual = 0.0;  // |sum_j kappa_j xi_j|
};

SpanResult span_coefficients(const std::vector<Vec>& xi);

// Given a future null direction xi1 at y and a causal direction eta there,
// returns null directions (xi2, xi3) within Euclidean angle r_U of xi1 such
// that eta lies in span(xi1, xi2, xi3) (residual below 1e-9 relative).
// Spacelike eta is rejected; so is the degenerate case where the null cone
// inside span(xi1, eta, w) collapses (vanishing linear coefficient).
std::pair<Vec, Vec> complete_span_directions(const MetricPtr& m, const Vec& y,
                                             const Vec& xi1, const Vec& eta,
                                             double r_U);

// --------------------------------------------------------- combined phase ---

// S(x) = sum_j Phi_j(x) with Phi_j = kappa_j phi_j when kappa_j > 0 and
// kappa_j conj(phi_j) when kappa_j < 0, phi_j the chart phase of beam j.
// Built at the meeting point y; the Hessian Q is obtained by differencing
// the analytic gradient.  Evaluations return NaN where some beam tube does
// not cover x.
class CombinedPhase {
 public:
  CombinedPhase(std::vector<std::shared_ptr<const GaussianBeam>> beams,
                Vec kappa, Vec y, double fd_h = 1e-3);

  cplx S(const Vec& x) const;
  CVec gradS(const Vec& x) const;

  const Vec& y() const { return y_; }
  const CMat& Q() const { return Q_; }
  cplx S_at_y() const { return S_y_; }
  double grad_norm_at_y() const { return grad_norm_y_; }
  double min_im_eig() const { return min_im_eig_; }

  // least-squares slope of log Im S against log distance over random-ish
  // directions at radii scale and scale/2; ~2 near a quadratic minimum
  double growth_exponent(double scale = 0.05, int ndir = 16) const;

 private:
  std::vector<std::shared_ptr<const GaussianBeam>> beams_;
  Vec kappa_, y_;
  CMat Q_;
  cplx S_y_{0, 0};
  double grad_norm_y_ = 0.0;
  double min_im_eig_ = 0.0;
};

// ------------------------------------------------- stationary-phase limit ---

// Richardson extrapolation assuming value(lambda) = L + c lambda^{-1/2}:
// pairwise eliminants over consecutive lambdas; err is the spread of the
// eliminants (or the size of the first correction if only one pair).
struct Extrapolated {
  double limit = 0.0;
  double err = 0.0;
};
Extrapolated richardson_half(const std::vector<double>& lambdas,
                             const std::vector<double>& values);

// Scaled oscillatory integrals lambda^{dim/2} int e^{i lambda S} F dx over a
// cube centred at y whose half-width shrinks like 1/sqrt(lambda), with the
// closed-form companion C0 F(y), C0 = (2 pi)^{dim/2} det(-i Q)^{-1/2} from
// the finite-difference Hessian Q of S at y.  Throws if Im Q is not
// positive definite.
struct PhaseLimitResult {
  std::vector<double> lambdas;
  std::vector<cplx> scaled;  // lambda^{dim/2} quadrature values
  cplx limit{0, 0};          // extrapolated (real and imaginary parts)
  double err = 0.0;
  cplx C0{0, 0};
  cplx closed_form{0, 0};  // C0 * F(y)
};

PhaseLimitResult stationary_phase_limit(
    const std::function<cplx(const Vec&)>& S,
    const std::function<cplx(const Vec&)>& F, const Vec& y,
    const std::vector<double>& lambdas, int pts_per_dim = 48,
    double box_factor = 30.0);

// --------------------------------------------------- interaction configs ---

BeamOptions default_interaction_beam_options();  // delta' = 0.6

struct InteractionConfig {
  MetricPtr m;
  Vec y;                // common interaction point
  std::vector<Vec> xi;  // four null future directions at y
  Vec kappa;            // four nonzero span coefficients
  // optional per-beam base points; default: all beams pass through y
  std::vector<Vec> centers;
  double chart_halfwidth = 2.0;  // beam charts cover [-w, w] around y
  BeamOptions beam = default_interaction_beam_options();
};

// Beams through the interaction point with Riccati data Y = I, Z = i I
// imposed at it, plus the combined phase built from them.
struct InteractionBeams {
  MetricPtr m;
  Vec y;
  Vec kappa;
  std::vector<Vec> tangents;  // beam axis tangents at the base points
  std::vector<std::shared_ptr<const GaussianBeam>> beams;
  std::shared_ptr<const CombinedPhase> phase;
};

InteractionBeams make_interaction(const InteractionConfig& cfg);

// ------------------------------------------------------- interaction data ---

struct SweepOptions {
  std::vector<double> lambda_list{40.0, 60.0, 90.0, 135.0};
  int pts_per_dim = 48;
  double box_factor = 30.0;  // half-width = sqrt(box_factor/(lambda mu))
};

// Semilinear datum.  The sweep evaluates, per lambda,
//   lambda^{(n+1)/2} int w(x) Re U0 Re U1 Re U2 Re U3 u_f^{m-3} dV
// (the full real-product form) and its two-term reduction
//   2^{-3} Re int w(x) cU0 cU1 cU2 cU3 u_f^{m-3} dV
// with cUj the beam conjugated when kappa_j < 0; beam j oscillates at
// frequency |kappa_j| lambda.  `value` is the extrapolated full form, to be
// compared with `predicted` = 2^{-3} Re C0 u_f(y)^{m-3}; `full_datum`
// applies the -m! normalization that ties the limit to the m-fold
// linearization of the source-to-solution map.
struct DSemiResult {
  std::vector<double> lambdas;
  std::vector<double> full_terms;  // scaled 16-term values
  std::vector<double> reduced;     // scaled 2-term reduction values
  double value = 0.0;
  double reduction = 0.0;
  double extrap_err = 0.0;
  cplx C0{0, 0};  // includes the sqrt|det g|(y) volume factor
  double predicted = 0.0;
  double full_datum = 0.0;
  double u_f_at_y = 1.0;
};

struct DSemiOptions {
  SweepOptions sweep;
  int m = 3;
  std::function<double(const Vec&)> u_f;  // probe solution; default 1
  // per-beam time windows (index 0..3) multiplying each factor; default 1.
  // Treated as weights on values (not differentiated): exact for windows
  // constant on the quadrature box, which covers both the default and the
  // causality probe where a window vanishes on the whole box.
  std::vector<std::function<double(const Vec&)>> windows;
};

DSemiResult eval_D_semi(const InteractionBeams& ib,
                        const DSemiOptions& opt = {});

// Quasilinear datum: the three integral groups of the third-linearization
// pairing with a metric perturbation h,
//   source group   Tr(h g^-1) u0 (u1 u2 f3 + u2 u3 f1 + u3 u1 f2)
//   trace group    Tr(h g^-1) (u1 u2 <du3, du0>_g + cyclic)
//   h group        (u1 u2 <du3, du0>_h + cyclic)
// each scaled by lambda^{(n-3)/2}; the combined datum is
// source + 2 * h_group - trace_group.  Both gradients are contracted with
// the inverse metric (covector pairing), <p,q>_h = p^T g^-1 h g^-1 q.  The
// h group tends to 2^{-3} Re C0 kappa_0^2 h(gdot0, gdot0) and the combined
// datum to twice that; the other groups vanish in the limit.
struct DQuasiResult {
  std::vector<double> lambdas;
  std::vector<double> group_source;
  std::vector<double> group_trace;
  std::vector<double> group_h;
  std::vector<double> combined;
  double value = 0.0;  // extrapolated combined datum
  double extrap_err = 0.0;
  double group_h_limit = 0.0;
  double group_trace_limit = 0.0;
  cplx C0{0, 0};
  double h_dot = 0.0;  // h(gdot0, gdot0) at y
  double predicted_group_h = 0.0;
  double predicted = 0.0;  // 2 * predicted_group_h
};

struct DQuasiOptions {
  SweepOptions sweep;
  std::function<Mat(const Vec&)> h;  // symmetric 2-tensor field (required)
  std::vector<std::function<double(const Vec&)>> windows;
  // optional beam sources f_1..f_3 (index 1..3 used) for the source group;
  // absent sources make that group vanish identically
  std::vector<std::function<double(const Vec&)>> sources;
};

DQuasiResult eval_D_quasi(const InteractionBeams& ib,
                          const DQuasiOptions& opt);

}  // namespace gbeam
