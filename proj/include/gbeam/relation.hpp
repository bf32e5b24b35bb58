#pragma once
// Foliated source/observation regions, the three-to-one membership oracle on
// quadruples of light rays, conical pieces, and earliest observation sets
// (built directly from a point, or from the relation alone).
//
// Verdicts are three-valued by design: membership is certified only through
// the sufficient conditions (common pre-cut intersection point with the span
// condition), non-membership only through a proof that no common point
// exists (all pairwise closest approaches above a gap tolerance), and
// everything in between stays "unknown".

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gbeam/causality.hpp"
#include "gbeam/geodesic.hpp"
#include "gbeam/manifold.hpp"

namespace gbeam {

// ------------------------------------------------------------ foliations ---

enum class FolSide { In, Out };

// Region swept by a straight coordinate path t in [-1,1] |-> mu(t) with a
// parallel-transported spacelike frame: F(t,a) = exp_{mu(t)}(sum a^i e_i(t)),
// |a| < delta.  The path must be timelike future-pointing.
class Foliation {
 public:
  Foliation(MetricPtr m, FolSide side, Vec mu_start, Vec mu_end, double delta);

  const MetricPtr& metric() const { return m_; }
  FolSide side() const { return side_; }
  double delta() const { return delta_; }

  Vec mu(double t) const;      // t in [-1, 1]
  Vec mu_dot(double t) const;  // d mu / dt (constant for straight paths)
  Mat frame(double t) const;   // dim x n columns spanning mu_dot^perp

  Vec map(double t, const Vec& a) const;  // F(t, a)
  // inverse of F; false when x is not in the (slightly padded) region
  bool locate(const Vec& x, double& t, Vec& a) const;
  bool contains(const Vec& x, double pad = 0.0) const;

  // sampled invariant: every a-curve is timelike future pointing
  bool curves_timelike_future(int nt = 11, int na = 4) const;

  // coordinate bounding box of the region (conservative)
  Box bounding_box(double pad = 0.0) const;

 private:
  MetricPtr m_;
  FolSide side_;
  Vec p0_, p1_;
  double delta_;
  bool affine_;                 // flat connection: F(t,a) = mu(t) + E(t) a
  std::vector<double> tgrid_;   // parallel-transport cache
  std::vector<Mat> frames_, dframes_;
};

// Sampled verdict of the separation conditions: the source region meets no
// past of the observation region's earliest slice, and the closed
// observation region avoids the future of the source path's latest point.
bool foliation_separation(const Foliation& fin, const Foliation& fout,
                          const CausalOracle& oc, int nt = 7, int na = 4);

// ------------------------------------------------- rays and intersections ---

struct LightVec {
  Vec x;   // base point
  Vec xi;  // future null direction
};

// null geodesic trace clipped to a coordinate box
struct Ray {
  Geodesic geo;
  double s_lo = 0.0, s_hi = 0.0;  // covered affine window
};

Ray trace_ray(const MetricPtr& m, const Vec& x, const Vec& xi, double dir,
              const Box& K, double horizon);

struct Approach {
  double dist = 0.0;
  double sa = 0.0, sb = 0.0;
};

// all local minima of the chart distance between two trace windows,
// coarse-bracketed on a (brackets+1)^2 grid and refined by alternating
// golden-section; sorted by distance
std::vector<Approach> closest_approaches(const Geodesic& A, double a0,
                                         double a1, const Geodesic& B,
                                         double b0, double b1, int brackets);

// distance from a point to a trace window (refined); s_at reports the
// realizing parameter
double point_ray_distance(const Geodesic& G, double s0, double s1,
                          const Vec& p, double& s_at, int brackets = 64);

// true when the two light vectors generate the same unparametrized null
// curve (within tol in chart distance and direction)
bool same_null_curve(const MetricPtr& m, const LightVec& a, const LightVec& b,
                     const Box& K, double horizon, double tol = 1e-7);

// ------------------------------------------------------ membership oracle ---

enum class Verdict { member, nonmember, unknown };

struct QuadWitness {
  Vec y;                      // common intersection point
  std::array<double, 4> s{};  // parameters: s0 <= 0 for v0, s1..s3 >= 0
  std::array<Vec, 4> xi;      // tangents at y
  Vec kappa;                  // span coefficients (kappa_0 = 1)
  double span_residual = 0.0;
  double meet_error = 0.0;    // max chart distance of the four rays from y
};

struct QuadResult {
  Verdict verdict = Verdict::unknown;
  std::optional<QuadWitness> witness;
  std::string reason;
  double pair_gap = 0.0;  // largest over the six ray pairs of the smallest
                          // approach distance (the separating quantity)
  double analytic_value = 0.0;      // D_semi sweep value (analytic oracle)
  double analytic_predicted = 0.0;  // its closed-form companion
};

struct RelationConfig {
  double horizon = 14.0;     // affine coverage per ray before box clipping
  int brackets = 64;         // coarse brackets per geodesic pair
  double gap_tol = 1e-5;     // "provably no common point" threshold
  double witness_tol = 1e-7; // common-point certification threshold
  double box_pad = 1.0;      // padding of the search box around the regions
  double span_tol = 1e-8;    // span-condition residual tolerance
  bool analytic_oracle = false;   // certify members through the semilinear
                                  // interaction datum instead of geometry
  double r_span = 0.5;       // cone-neighbourhood radius for companions
  double eset_ds = 0.05;     // arc pitch along rays for set sampling
  CausalConfig causal;       // cut times / chronology configuration
};

class RelationOracle {
 public:
  RelationOracle(MetricPtr m, Foliation fol_in, Foliation fol_out,
                 RelationConfig cfg = {});

  const MetricPtr& metric() const { return m_; }
  const Foliation& fol_in() const { return fin_; }
  const Foliation& fol_out() const { return fout_; }
  const RelationConfig& config() const { return cfg_; }
  const CausalOracle& causal() const { return oc_; }
  const Box& search_box() const { return K_; }

  // three-to-one membership for (v0; v1, v2, v3)
  QuadResult membership(const LightVec& v0, const LightVec& v1,
                        const LightVec& v2, const LightVec& v3) const;

  // cut window rho for the forward ray from (x, xi); cached
  CutResult cut_forward(const Vec& x, const Vec& xi) const;
  CutResult cut_backward(const Vec& x, const Vec& xi) const;

  // --------------------------------------------------- conical pieces -----
  struct ConeSample {
    LightVec v0;   // sampled light vector over the observation region
    Vec y;         // meeting point it was certified through
    Vec eta;       // direction at y
    double ray_s;  // parameter along the ray from y
    int dir = 0;   // fan index of eta
    int meeting = 0;
  };
  struct ConicalPiece {
    std::vector<ConeSample> samples;
    std::vector<Vec> meeting_points;  // the finite intersection set
    double pitch = 0.0;
    double max_flowout_gap = 0.0;  // largest distance of a sample's backward
                                   // ray from the intersection set
  };
  // samples v0 with member verdicts (v0, v1, v2, v3) for a searched v3
  ConicalPiece conical_piece(const LightVec& v1, const LightVec& v2,
                             int budget) const;

  // ------------------------------------------- earliest observation sets --
  struct EObsSample {
    Vec x, xi;     // light vector over the observation region
    double t = 0;  // foliation chart coordinates of the base point
    Vec a;
    double ray_s = 0.0;  // parameter along the generating ray
    int dir = 0;         // fan / budget index of the generating direction
    int meeting = 0;     // index of the generating meeting point
  };
  struct EarliestSet {
    bool from_relation = false;
    Vec anchor;  // source point (direct) or first meeting point (relation)
    std::vector<EObsSample> samples;       // after the no-earlier filter
    std::vector<EObsSample> cone_samples;  // before the filter (sampled C)
    std::vector<Vec> meeting_points;
    double pitch = 0.0;
  };

  // fan of optimizing null rays from x recorded at observation crossings
  EarliestSet earliest_direct(const Vec& x, int budget) const;

  // relation-derived set: conical pieces through the meeting points of the
  // two rays, certified by membership of companion quadruples for both v1
  // and v2, then filtered by the sampled no-earlier predicate
  EarliestSet earliest_from_relation(const LightVec& v1, const LightVec& v2,
                                     int budget) const;

 private:
  std::vector<Vec> ray_meetings(const Ray& A, const Ray& B,
                                std::vector<std::array<double, 2>>* params
                                = nullptr) const;
  bool trace_to_region(const Vec& y, const Vec& dir_back,
                       const Foliation& fol, LightVec& out, double& s_at)
      const;
  MetricPtr m_;
  Foliation fin_, fout_;
  RelationConfig cfg_;
  CausalOracle oc_;
  Box K_;
  mutable std::map<std::uint64_t, CutResult> cut_cache_;
};

// symmetric Hausdorff distance between two sampled sets in the observation
// chart, measured on (t, a, unit direction) features
double hausdorff_chart(const RelationOracle::EarliestSet& A,
                       const RelationOracle::EarliestSet& B,
                       const Foliation& fol_out);

}  // namespace gbeam
