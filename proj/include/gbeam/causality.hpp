// ---------------------------------------------------------------------------
// causality.hpp -- causal relations and time separation:
//   * closed forms for flat and conformally flat metrics (cones are
//     conformally invariant; tau scales by sqrt(c) for constant c),
//   * an earliest-arrival null-fan oracle for perturbed metrics (1+2 dims):
//     y in I+(x)  <=>  y^0 > A_x(y'), with A_x the first x^0-arrival of the
//     forward null fan from x at spatial point y',
//   * cut times rho(v) by bisection on the chronology predicate along the ray
//     (tau(x, gamma_v(s)) is nondecreasing in s, so the switch is clean),
//   * timelike shooting for tau values on generic families,
//   * earliest observation functions f^+/f^- along observer curves.
// ---------------------------------------------------------------------------
#pragma once

#include <functional>
#include <map>
#include <optional>

#include "gbeam/geodesic.hpp"

namespace gbeam {

struct CausalConfig {
  double tau_tol = 1e-7;    // tolerance band on time separation
  double geo_tol = 1e-9;    // cone-membership band (in coordinate units)
  int bisect_depth = 60;
  int fan_dirs = 512;       // null fan resolution (n == 2)
  double fan_ds = 0.02;     // polyline sampling step along fan rays
  double fan_radius = 8.0;  // spatial coverage radius of a fan
  double fan_time = 12.0;   // temporal coverage of a fan
  double arr_margin = 1e-9; // chronology margin in arrival time
};

enum class CausalVerdict { Chronological, CausalNull, None };

// ----------------------------------------------------------- null fans ------
// Forward (or backward) null fan from a source point in 1+2 dimensions,
// supporting earliest-arrival queries at spatial points.
class ArrivalFan {
 public:
  ArrivalFan(MetricPtr m, Vec source, bool forward, const CausalConfig& cfg);

  // Earliest x^0-arrival of the fan at spatial point p (size-2 vector);
  // +inf when p is not reached within the fan coverage.  For backward fans
  // this is the *latest* departure time (sup of x^0 with x in J^-(...)),
  // computed on the time-reversed flow and mapped back.
  double arrival(const Eigen::Vector2d& p) const;

  // As above, also reporting the realizing direction index and parameter.
  struct Witness {
    double arrival;
    int dir_index;
    double s;
    double theta;
  };
  Witness arrival_witness(const Eigen::Vector2d& p) const;

  const Vec& source() const { return src_; }
  bool forward() const { return forward_; }

 private:
  struct Sample {
    double s, t, px, py;
  };
  MetricPtr m_;
  Vec src_;
  bool forward_;
  CausalConfig cfg_;
  std::vector<std::vector<Sample>> rays_;  // polylines per direction
  std::vector<double> thetas_;
};

// -------------------------------------------------------------- oracle ------
class CausalOracle {
 public:
  CausalOracle(MetricPtr m, CausalConfig cfg = {});

  const MetricPtr& metric() const { return m_; }
  const CausalConfig& config() const { return cfg_; }

  bool chronological(const Vec& x, const Vec& y) const;  // y in I+(x)
  bool causally_leq(const Vec& x, const Vec& y) const;   // y in J+(x)
  CausalVerdict relation(const Vec& x, const Vec& y) const;

  // Time separation tau(x, y); 0 when not causally related.  Closed form for
  // flat / conformally flat (constant factor); timelike shooting otherwise.
  double tau(const Vec& x, const Vec& y) const;

  // Fan access (built lazily, cached by source point).  n == 2 only.
  const ArrivalFan& fan(const Vec& source, bool forward = true) const;

 private:
  bool flat_cones() const;  // cones coincide with eta-cones
  MetricPtr m_;
  CausalConfig cfg_;
  mutable std::map<std::pair<std::uint64_t, bool>, std::unique_ptr<ArrivalFan>>
      fans_;
};

// ---------------------------------------------------------- cut times -------
struct CutResult {
  double rho = 0.0;      // cut parameter (== exit_s when no cut in box)
  bool cut_found = false;
  double exit_s = 0.0;   // R(v), exit time from the box
};

// rho(v) = sup{ s > 0 : tau(pi(v), gamma_v(s)) = 0 }, searched on (0, R(v)]
// with R(v) the box exit time.  cut_found == false means no cut inside K.
CutResult cut_time(const CausalOracle& oc, const Vec& x, const Vec& xi,
                   const Box& K);

// Past version: sup{ s > 0 : tau(gamma_v(-s), pi(v)) = 0 }, i.e. the cut
// parameter of the time-reversed ray; used for backward-segment windows.
CutResult cut_time_past(const CausalOracle& oc, const Vec& x, const Vec& xi,
                        const Box& K);

// Null-optimality of the pair (x, y): causally related with tau <= tau_tol.
bool is_optimizing(const CausalOracle& oc, const Vec& x, const Vec& y);

// ---------------------------------------------------- observer functions ----
struct ObserverCurve {
  // future-directed timelike curve parametrized on [-1, 1]
  std::function<Vec(double)> at;
};

// f^+(x) = inf{ s : mu(s) in I+(x), or 1 },  f^-(x) = sup{ s : mu(s) in
// I-(x)... i.e. x in I+(mu(s)), or -1 }.  Monotone predicates; bisection.
double earliest_obs_plus(const CausalOracle& oc, const ObserverCurve& mu,
                         const Vec& x);
double earliest_obs_minus(const CausalOracle& oc, const ObserverCurve& mu,
                          const Vec& x);

// ------------------------------------------------------------ free forms ----
double time_separation(const MetricPtr& m, const Vec& x, const Vec& y,
                       const CausalConfig& cfg = {});
CausalVerdict causal_relation(const MetricPtr& m, const Vec& x, const Vec& y,
                              const CausalConfig& cfg = {});

}  // namespace gbeam
