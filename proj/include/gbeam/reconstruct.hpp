#pragma once
// Recovery of earliest-observation data and of a conformal factor from the
// membership oracle's outputs alone.
//
//   * f_a          -- chart time of the first cone crossing of a leaf curve
//                     of the observation foliation, read off a sampled
//                     conical piece.
//   * f_crit_and_W -- sweeps partner light vectors near a reference ray,
//                     flags the ones whose observed piece admits an
//                     alternative in-region generator anchored later on the
//                     source path, and reports the critical first-arrival
//                     time over the flagged set (+infinity when none).
//   * recover_E_family -- assembles the family of earliest observation sets
//                     along the reference ray from relation-derived data
//                     filtered by the critical time, and scores it against
//                     the direct causal-oracle construction.
//   * recover_conformal_factor -- end-to-end ratio pipeline estimating a
//                     conformal factor at an interaction point from the
//                     semilinear datum, calibrated by a reference run.
//
// Candidate sweeps are embarrassingly parallel (each candidate builds its
// own piece); the implementation runs them sequentially because the shared
// cut/chronology caches are not synchronized.

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "gbeam/interaction.hpp"
#include "gbeam/relation.hpp"

namespace gbeam {

// ------------------------------------------------- first-arrival functional --

// Earliest chart time t at which the sampled cone (the pre-filter samples of
// `set`) crosses the leaf curve a = const of the observation foliation:
//   min { s.t : |s.a - a| <= a_tol, s.t <= 1 }, clamped to [-1, 1],
// and 1 when no sample matches.  a_tol < 0 selects max(pitch, arc pitch).
double f_a(const RelationOracle::EarliestSet& set, const Vec& a,
           double a_tol = -1.0);

// Convenience form: builds the relation-derived set for (v1, v2) first.
double f_a(const RelationOracle& R, const LightVec& v1, const LightVec& v2,
           const Vec& a, int budget);

// --------------------------------------------------------- candidate sweeps --

struct ReconstructConfig {
  // partner construction: crossing points gamma_{v1}(r), r on a uniform grid
  int n_candidates = 8;
  double r_lo = 0.5;
  double r_hi = 3.5;
  double u_radius = 0.35;  // direction-cone radius for partner rays
  int budget = 64;         // fan budget per observed-piece build
  // later-anchor search
  int w_budget = 64;         // backward fan budget per meeting point
  double w_margin = 0.02;    // chart margin: anchors must beat s by this
  double path_hit_tol = 1e-5;   // crossing tolerance against the source path
  double anchor_tol = 1e-5;     // precondition: backward ray meets mu_in(s)
  double path_clearance = 1e-3; // precondition: ray avoids the leaf path
  double hausdorff_factor = 10.0;  // acceptance multiple of the pitch
};

// One swept partner: a light vector whose ray crosses the reference ray at
// gamma_{v1}(r), its observed piece, first-arrival time, and the outcome of
// the later-anchor search.
struct ECandidate {
  LightVec v2;
  double r = 0.0;        // crossing parameter along the reference ray
  double f0 = 1.0;       // first-arrival time of the piece on the center leaf
  bool flagged = false;  // admits a later-anchored in-region generator
  double s_tilde = -2.0; // latest anchor found (chart units; -2 = none)
  RelationOracle::EarliestSet eset;
};

struct CritResult {
  double f_crit = std::numeric_limits<double>::infinity();
  bool insufficient = false;  // no candidates could be examined
  double anchor_s = 0.0;
  std::vector<ECandidate> candidates;
};

// Sweeps partners of v1 within the direction cone, builds each observed
// piece, and searches every meeting point's backward fan for a crossing of
// the source path at chart parameter > s + w_margin (the alternative
// generator's pre-base segment must pass the path strictly later than the
// reference anchor).  f_crit is the smallest f0 among flagged candidates.
//
// Preconditions (throw std::invalid_argument): the backward extension of v1
// passes within anchor_tol of mu_in(s) strictly before the base, and the
// full v1 ray stays path_clearance away from the observation leaf path.
CritResult f_crit_and_W(const RelationOracle& R, const LightVec& v1, double s,
                        const ReconstructConfig& cfg = {});

// ----------------------------------------------------------- family report --

struct RecoveryReport {
  LightVec v1;
  double s_anchor = 0.0;
  double f_crit = std::numeric_limits<double>::infinity();
  bool insufficient = false;
  // optimality bound in the base-ray parameter: cut parameter of the ray
  // re-based at mu_in(s_anchor), minus the anchor-to-base offset
  double rho_anchor = std::numeric_limits<double>::infinity();
  std::vector<ECandidate> candidates;   // full sweep, ordered by r
  std::vector<int> family;              // indices kept by the strict filter
  std::vector<double> pair_hausdorff;   // per family member, vs direct set
  double pitch = 0.0;
  double max_pair_hausdorff = 0.0;
  // worst gap between the filtered family's r values and the candidate grid
  // restricted to the optimizing observable segment (coverage both ways)
  double coverage_gap = 0.0;
};

// Runs the sweep, keeps candidates with f0 < f_crit and f0 < 1 and a
// non-empty filtered sample set, and scores each kept piece against the
// direct construction at the same crossing parameter (the parameter is
// used for pairing and reporting only; the recovery itself consumes only
// relation-derived data).
RecoveryReport recover_E_family(const RelationOracle& R, const LightVec& v1,
                                double s, const ReconstructConfig& cfg = {});

// Serialized forms: a JSON document of the report and a plot-ready CSV of
// f0 against candidate index (17 significant digits, sorted keys).
std::string report_json(const RecoveryReport& rep);
void write_f0_csv(std::ostream& os, const RecoveryReport& rep);

// ------------------------------------------------------ conformal recovery --

struct ConformalOptions {
  SweepOptions sweep;            // lambda list and quadrature density
  double alpha = 1.0;            // probe amplitude rescale (cancels exactly)
  double chart_halfwidth = 2.0;  // beam chart coverage around y
  int phase_samples = 24;        // eikonal-invariance diagnostic points
};

struct ConformalRecovery {
  int n = 0;
  int m_exp = 3;
  double exponent = 0.0;   // net power of the factor in the datum ratio
  double datum = 0.0;      // measured-side extrapolated datum
  double datum_ref = 0.0;  // reference-side calibration datum
  double ratio = 0.0;
  double c_est = 0.0;
  std::vector<double> lambdas;
  std::vector<double> ratio_per_lambda;
  // largest eikonal residual of the shared phase measured against the
  // scaled metric over near-axis samples (conformal invariance of the
  // phase construction; identically the reference residual over c)
  double eikonal_defect = 0.0;
  // phase disagreement between the measured and reference pipelines at the
  // diagnostic samples (zero by the shared-gauge construction)
  double phase_mismatch = 0.0;
};

// Estimates c(y) for a metric g = c * g_ref from the semilinear interaction
// datum.  Both runs share beams built on g_ref (the phase is a conformal
// invariant; the measured run carries the factor's volume, amplitude, and
// probe powers as integrand weights):
//   measured  : weight c^{(3-n)/2} on the volume+amplitude side and probe
//               u_f = alpha * c^{-(n-1)/4},
//   reference : unit weight and probe u_f = alpha,
// and   c_est = (datum / datum_ref)^{1/E},
//       E     = -(n-3)/2 - (n-1)(m_exp-3)/4.
// kappa(0) must equal 1.  Throws std::invalid_argument when E vanishes
// ((n, m_exp) = (3, 3): the datum carries no power of c) and
// std::runtime_error when the calibration datum vanishes or the ratio is
// not positive.
ConformalRecovery recover_conformal_factor(
    const MetricPtr& g_ref, const std::function<double(const Vec&)>& c,
    const Vec& y, const std::vector<Vec>& xi, const Vec& kappa, int m_exp,
    const ConformalOptions& opt = {});

}  // namespace gbeam
