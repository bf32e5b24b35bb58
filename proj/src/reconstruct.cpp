#include "gbeam/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gbeam {
namespace {

// direction at xi's cone rotated by alpha toward a transverse axis, then
// re-projected onto the metric's null cone (future-pointing)
Vec rotate_null(const MetricPtr& m, const Vec& y, const Vec& xi,
                double alpha) {
  const int dim = static_cast<int>(xi.size());
  Vec sp = xi.tail(dim - 1);
  const double nrm = sp.norm();
  if (nrm < 1e-12)
    throw std::invalid_argument("rotate_null: degenerate spatial direction");
  Vec e = sp / nrm;
  int k = 0;
  double best = 2.0;
  for (int i = 0; i < dim - 1; ++i)
    if (std::abs(e(i)) < best) {
      best = std::abs(e(i));
      k = i;
    }
  Vec u = Vec::Zero(dim - 1);
  u(k) = 1.0;
  u -= u.dot(e) * e;
  u.normalize();
  Vec cand(dim);
  cand(0) = xi(0);
  cand.tail(dim - 1) = nrm * (std::cos(alpha) * e + std::sin(alpha) * u);
  Vec out = m->project_null(y, cand);
  if (out(0) < 0.0) out = -out;
  return out;
}

// base a light vector inside the source region on the backward ray from
// (y, eta): walks the trace and returns the midpoint of the first run of
// points inside the region (false when the ray misses it)
bool backward_base(const RelationOracle& R, const Vec& y, const Vec& eta,
                   LightVec& v2) {
  const double ds = R.config().eset_ds;
  const Ray B = trace_ray(R.metric(), y, eta, -1.0, R.search_box(),
                          R.config().horizon);
  double run_hi = 1.0, run_lo = 1.0;  // invalid until a run opens
  bool inside = false;
  for (double s = -ds; s >= B.s_lo; s -= ds) {
    const bool in = R.fol_in().contains(B.geo.point(s));
    if (in && !inside) {
      run_hi = s;
      inside = true;
    } else if (!in && inside) {
      run_lo = s + ds;
      break;
    }
    if (in) run_lo = s;
  }
  if (!inside) return false;
  const double sb = 0.5 * (run_hi + run_lo);
  v2.x = B.geo.point(sb);
  v2.xi = B.geo.tangent(sb);
  return true;
}

struct RayPathMin {
  double d = 1e18;  // smallest distance between the trace and the path
  double t = -2.0;  // realizing path chart parameter
  double s = 0.0;   // realizing ray parameter
};

// global minimum of the distance between a trace window and the source
// path: coarse walk against precomputed path nodes, then nested golden
// sections over the ray and path parameters around every local minimum
RayPathMin ray_path_min(const Geodesic& G, double s0, double s1,
                        const Foliation& fol, const std::vector<Vec>& nodes) {
  const int NT = static_cast<int>(nodes.size());
  const int NW = 241;
  std::vector<double> dw(NW);
  std::vector<int> iw(NW);
  for (int w = 0; w < NW; ++w) {
    const Vec p = G.point(s0 + (s1 - s0) * w / (NW - 1));
    double dmin = 1e18;
    int imin = 0;
    for (int i = 0; i < NT; ++i) {
      const double d = (p - nodes[i]).norm();
      if (d < dmin) {
        dmin = d;
        imin = i;
      }
    }
    dw[w] = dmin;
    iw[w] = imin;
  }
  RayPathMin best;
  for (int w = 0; w < NW; ++w) {
    const bool lo = (w == 0) || dw[w] <= dw[w - 1];
    const bool hi = (w == NW - 1) || dw[w] <= dw[w + 1];
    if (!(lo && hi)) continue;
    const double sa = s0 + (s1 - s0) * std::max(0, w - 1) / (NW - 1.0);
    const double sb = s0 + (s1 - s0) * std::min(NW - 1, w + 1) / (NW - 1.0);
    const double ta = -1.0 + 2.0 * std::max(0, iw[w] - 2) / (NT - 1.0);
    const double tb = -1.0 + 2.0 * std::min(NT - 1, iw[w] + 2) / (NT - 1.0);
    const auto dist_at = [&](double s) {
      const Vec p = G.point(s);
      const double tm =
          golden_min([&](double t) { return (p - fol.mu(t)).norm(); }, ta, tb,
                     1e-10, 80);
      return (p - fol.mu(tm)).norm();
    };
    const double s_ref = golden_min(dist_at, sa, sb, 1e-10, 80);
    const Vec p = G.point(s_ref);
    const double t_ref = golden_min(
        [&](double t) { return (p - fol.mu(t)).norm(); }, ta, tb, 1e-10, 80);
    const double d_ref = (p - fol.mu(t_ref)).norm();
    if (d_ref < best.d) best = RayPathMin{d_ref, t_ref, s_ref};
  }
  return best;
}

// sweep of engineered partners: rays crossing the reference ray at a grid
// of parameters, based inside the source region
std::vector<ECandidate> build_candidates(const RelationOracle& R,
                                         const LightVec& v1,
                                         const ReconstructConfig& cfg) {
  std::vector<ECandidate> out;
  const MetricPtr& m = R.metric();
  const Ray F =
      trace_ray(m, v1.x, v1.xi, 1.0, R.search_box(), R.config().horizon);
  const int N = std::max(1, cfg.n_candidates);
  const Vec a0 = Vec::Zero(R.fol_out().frame(0.0).cols());
  for (int j = 0; j < N; ++j) {
    const double r =
        (N == 1) ? cfg.r_lo
                 : cfg.r_lo + (cfg.r_hi - cfg.r_lo) * j / (N - 1.0);
    if (r <= 0.0 || r >= F.s_hi - 1e-9) continue;
    const Vec y = F.geo.point(r);
    const Vec xi_y = F.geo.tangent(r);
    const double mag = 0.6 + 0.4 * ((j / 2) % 2);
    const double alpha = cfg.u_radius * mag * (j % 2 == 0 ? 1.0 : -1.0);
    Vec eta;
    try {
      eta = rotate_null(m, y, xi_y, alpha);
    } catch (const std::invalid_argument&) {
      continue;
    }
    ECandidate cand;
    if (!backward_base(R, y, eta, cand.v2)) continue;
    if (same_null_curve(m, v1, cand.v2, R.search_box(), R.config().horizon))
      continue;
    cand.r = r;
    cand.eset = R.earliest_from_relation(v1, cand.v2, cfg.budget);
    cand.f0 = f_a(cand.eset, a0);
    out.push_back(std::move(cand));
  }
  return out;
}

// flags a candidate when some meeting point's backward fan crosses the
// source path strictly later than the reference anchor
void later_anchor_search(const RelationOracle& R, const ReconstructConfig& cfg,
                         double s, ECandidate& cand) {
  const MetricPtr& m = R.metric();
  const int dim = m->dim;
  const int NT = 161;
  std::vector<Vec> nodes;
  nodes.reserve(NT);
  for (int i = 0; i < NT; ++i)
    nodes.push_back(R.fol_in().mu(-1.0 + 2.0 * i / (NT - 1)));

  CounterRng rng{552211u};
  std::uint64_t ctr = 0;
  for (const Vec& y : cand.eset.meeting_points) {
    // backward null ray from the crossing point along a fan direction,
    // measured against the source path
    const auto probe = [&](const Vec& sp) -> RayPathMin {
      Vec cone(dim);
      cone(0) = 1.0;
      cone.tail(dim - 1) = sp.normalized();
      Vec eta;
      try {
        eta = m->project_null(y, cone);
      } catch (const std::exception&) {
        return RayPathMin{};
      }
      if (eta(0) < 0.0) eta = -eta;
      const Ray B =
          trace_ray(m, y, eta, -1.0, R.search_box(), R.config().horizon);
      if (B.s_lo > -1e-6) return RayPathMin{};
      return ray_path_min(B.geo, B.s_lo, -1e-6, R.fol_in(), nodes);
    };
    const auto record = [&](const RayPathMin& hit) {
      if (hit.d >= cfg.path_hit_tol) return;
      if (hit.t <= s + cfg.w_margin) return;
      cand.flagged = true;
      cand.s_tilde = std::max(cand.s_tilde, hit.t);
    };

    if (dim == 3) {
      // a path crossing is codimension one in the fan angle: scan a
      // uniform fan, then refine every local minimum of the miss distance
      const int N = std::max(8, cfg.w_budget);
      const auto dir_at = [&](double th) {
        Vec sp(2);
        sp << std::cos(th), std::sin(th);
        return sp;
      };
      std::vector<double> dv(N);
      for (int j = 0; j < N; ++j)
        dv[j] = probe(dir_at(2.0 * kPi * j / N)).d;
      for (int j = 0; j < N; ++j) {
        const double dm = dv[(j + N - 1) % N], dp = dv[(j + 1) % N];
        if (!(dv[j] <= dm && dv[j] <= dp) || dv[j] > 1e17) continue;
        const double th0 = 2.0 * kPi * (j - 1.0) / N;
        const double th1 = 2.0 * kPi * (j + 1.0) / N;
        const double th_ref = golden_min(
            [&](double th) { return probe(dir_at(th)).d; }, th0, th1, 1e-10,
            60);
        record(probe(dir_at(th_ref)));
      }
    } else {
      // higher spatial dimension: coarse spherical scan only
      for (int j = 0; j < cfg.w_budget; ++j) {
        Vec sp(dim - 1);
        do {
          for (int i = 0; i < dim - 1; ++i) sp(i) = rng.normal(ctr++);
        } while (sp.norm() < 1e-8);
        record(probe(sp));
      }
    }
  }
}

// backward parameter at which the reference ray passes the anchor point;
// throws when the theorem-style preconditions fail on the sampled data
double checked_anchor_param(const RelationOracle& R, const LightVec& v1,
                            double s, const ReconstructConfig& cfg,
                            Ray* back_out = nullptr) {
  const MetricPtr& m = R.metric();
  const Ray back =
      trace_ray(m, v1.x, v1.xi, -1.0, R.search_box(), R.config().horizon);
  double s_at = 0.0;
  const double d = point_ray_distance(back.geo, back.s_lo, back.s_hi,
                                      R.fol_in().mu(s), s_at);
  if (d > cfg.anchor_tol)
    throw std::invalid_argument(
        "f_crit_and_W: the backward extension of v1 misses the source-path "
        "anchor (distance " +
        std::to_string(d) + ")");
  if (s_at > -1e-9)
    throw std::invalid_argument(
        "f_crit_and_W: the anchor is not strictly before the base of v1");
  const Ray fwd =
      trace_ray(m, v1.x, v1.xi, 1.0, R.search_box(), R.config().horizon);
  double clear = 1e18;
  for (int i = 0; i <= 40; ++i) {
    const Vec p = R.fol_out().mu(-1.0 + 2.0 * i / 40.0);
    double tmp;
    clear = std::min(clear,
                     point_ray_distance(back.geo, back.s_lo, back.s_hi, p, tmp));
    clear = std::min(clear,
                     point_ray_distance(fwd.geo, fwd.s_lo, fwd.s_hi, p, tmp));
  }
  if (clear < cfg.path_clearance)
    throw std::invalid_argument(
        "f_crit_and_W: the v1 ray approaches the observation leaf path "
        "(clearance " +
        std::to_string(clear) + ")");
  if (back_out) *back_out = back;
  return s_at;
}

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

// ------------------------------------------------- first-arrival functional --

double f_a(const RelationOracle::EarliestSet& set, const Vec& a,
           double a_tol) {
  double tol = a_tol;
  if (tol < 0.0) tol = std::max(set.pitch, 1e-3);
  double best = 1.0;
  for (const auto& smp : set.cone_samples) {
    if (smp.t > 1.0) continue;
    if ((smp.a - a).norm() > tol) continue;
    best = std::min(best, smp.t);
  }
  return std::clamp(best, -1.0, 1.0);
}

double f_a(const RelationOracle& R, const LightVec& v1, const LightVec& v2,
           const Vec& a, int budget) {
  return f_a(R.earliest_from_relation(v1, v2, budget), a);
}

// --------------------------------------------------------- candidate sweeps --

CritResult f_crit_and_W(const RelationOracle& R, const LightVec& v1, double s,
                        const ReconstructConfig& cfg) {
  checked_anchor_param(R, v1, s, cfg);
  CritResult out;
  out.anchor_s = s;
  if (cfg.budget <= 0 || cfg.n_candidates <= 0) {
    out.insufficient = true;
    return out;
  }
  out.candidates = build_candidates(R, v1, cfg);
  if (out.candidates.empty()) {
    out.insufficient = true;
    return out;
  }
  for (ECandidate& cand : out.candidates) {
    later_anchor_search(R, cfg, s, cand);
    if (cand.flagged) out.f_crit = std::min(out.f_crit, cand.f0);
  }
  return out;
}

// ----------------------------------------------------------- family report --

RecoveryReport recover_E_family(const RelationOracle& R, const LightVec& v1,
                                double s, const ReconstructConfig& cfg) {
  Ray back;
  const double s_at = checked_anchor_param(R, v1, s, cfg, &back);
  CritResult crit = f_crit_and_W(R, v1, s, cfg);

  RecoveryReport rep;
  rep.v1 = v1;
  rep.s_anchor = s;
  rep.f_crit = crit.f_crit;
  rep.insufficient = crit.insufficient;
  rep.candidates = std::move(crit.candidates);

  // optimality bound measured from the anchor, expressed in base-ray units
  const Vec a_pt = back.geo.point(s_at);
  const Vec a_xi = back.geo.tangent(s_at);
  const CutResult cr = cut_time(R.causal(), a_pt, a_xi, R.search_box());
  rep.rho_anchor = cr.cut_found
                       ? cr.rho + s_at  // s_at < 0: offset to the base
                       : std::numeric_limits<double>::infinity();

  const Ray fwd =
      trace_ray(R.metric(), v1.x, v1.xi, 1.0, R.search_box(),
                R.config().horizon);
  for (int i = 0; i < static_cast<int>(rep.candidates.size()); ++i) {
    const ECandidate& cand = rep.candidates[i];
    if (!(cand.f0 < rep.f_crit) || !(cand.f0 < 1.0) ||
        cand.eset.samples.empty())
      continue;
    rep.family.push_back(i);
    rep.pitch = std::max(rep.pitch, cand.eset.pitch);
    double h = 1e9;
    try {
      const RelationOracle::EarliestSet direct =
          R.earliest_direct(fwd.geo.point(cand.r), cfg.budget);
      h = hausdorff_chart(cand.eset, direct, R.fol_out());
    } catch (const std::exception&) {
      // direct construction unavailable at this point; keep the sentinel
    }
    rep.pair_hausdorff.push_back(h);
    rep.max_pair_hausdorff = std::max(rep.max_pair_hausdorff, h);
  }

  // coverage of the observable optimizing segment by the filtered family
  std::vector<double> grid;
  for (const ECandidate& cand : rep.candidates)
    if (cand.f0 < 1.0 && cand.r < rep.rho_anchor) grid.push_back(cand.r);
  for (double r : grid) {
    double gap = 1e9;
    for (int i : rep.family)
      gap = std::min(gap, std::abs(rep.candidates[i].r - r));
    rep.coverage_gap = std::max(rep.coverage_gap, grid.empty() ? 0.0 : gap);
  }
  return rep;
}

std::string report_json(const RecoveryReport& rep) {
  nlohmann::json j;
  j["anchor"]["base"] = vec_json(rep.v1.x);
  j["anchor"]["direction"] = vec_json(rep.v1.xi);
  j["anchor"]["s"] = rep.s_anchor;
  j["f_crit"] = std::isfinite(rep.f_crit) ? nlohmann::json(rep.f_crit)
                                          : nlohmann::json("inf");
  j["insufficient_sampling"] = rep.insufficient;
  j["rho_anchor"] = std::isfinite(rep.rho_anchor)
                        ? nlohmann::json(rep.rho_anchor)
                        : nlohmann::json("inf");
  j["pitch"] = rep.pitch;
  j["max_pair_hausdorff"] = rep.max_pair_hausdorff;
  j["coverage_gap"] = rep.coverage_gap;
  j["family"] = rep.family;
  j["pair_hausdorff"] = rep.pair_hausdorff;
  nlohmann::json cands = nlohmann::json::array();
  for (const ECandidate& c : rep.candidates) {
    nlohmann::json jc;
    jc["r"] = c.r;
    jc["f0"] = c.f0;
    jc["flagged"] = c.flagged;
    jc["s_tilde"] = c.s_tilde;
    jc["base"] = vec_json(c.v2.x);
    jc["direction"] = vec_json(c.v2.xi);
    jc["samples"] = c.eset.samples.size();
    jc["cone_samples"] = c.eset.cone_samples.size();
    cands.push_back(jc);
  }
  j["candidates"] = cands;
  return j.dump(2);
}

void write_f0_csv(std::ostream& os, const RecoveryReport& rep) {
  os << "index,r,f0,flagged,s_tilde,in_family,pair_hausdorff\n";
  os << std::setprecision(17);
  for (int i = 0; i < static_cast<int>(rep.candidates.size()); ++i) {
    const ECandidate& c = rep.candidates[i];
    const auto it = std::find(rep.family.begin(), rep.family.end(), i);
    const bool fam = it != rep.family.end();
    os << i << ',' << c.r << ',' << c.f0 << ',' << (c.flagged ? 1 : 0) << ','
       << c.s_tilde << ',' << (fam ? 1 : 0) << ',';
    if (fam)
      os << rep.pair_hausdorff[it - rep.family.begin()];
    else
      os << -1;
    os << '\n';
  }
}

// ------------------------------------------------------ conformal recovery --

ConformalRecovery recover_conformal_factor(
    const MetricPtr& g_ref, const std::function<double(const Vec&)>& c,
    const Vec& y, const std::vector<Vec>& xi, const Vec& kappa, int m_exp,
    const ConformalOptions& opt) {
  const int n = g_ref->n;
  if (kappa.size() != 4 || std::abs(kappa(0) - 1.0) > 1e-12)
    throw std::invalid_argument(
        "recover_conformal_factor: kappa must have four entries with "
        "kappa_0 = 1");
  const double E = -0.5 * (n - 3) - 0.25 * (n - 1) * (m_exp - 3);
  if (std::abs(E) < 1e-12)
    throw std::invalid_argument(
        "recover_conformal_factor: the datum exponent vanishes for (n, m) = "
        "(3, 3); the principal datum carries no power of the factor");

  InteractionConfig ic;
  ic.m = g_ref;
  ic.y = y;
  ic.xi = xi;
  ic.kappa = kappa;
  ic.chart_halfwidth = opt.chart_halfwidth;
  const InteractionBeams ib = make_interaction(ic);

  DSemiOptions meas;
  meas.sweep = opt.sweep;
  meas.m = m_exp;
  meas.u_f = [c, n, a = opt.alpha](const Vec& x) {
    return a * std::pow(c(x), -0.25 * (n - 1));
  };
  meas.windows.resize(4);
  meas.windows[0] = [c, n](const Vec& x) {
    return std::pow(c(x), 0.5 * (3 - n));
  };
  for (int j = 1; j < 4; ++j)
    meas.windows[j] = [](const Vec&) { return 1.0; };
  const DSemiResult dm = eval_D_semi(ib, meas);

  DSemiOptions ref;
  ref.sweep = opt.sweep;
  ref.m = m_exp;
  ref.u_f = [a = opt.alpha](const Vec&) { return a; };
  const DSemiResult dr = eval_D_semi(ib, ref);

  if (std::abs(dr.value) < 1e-14)
    throw std::runtime_error(
        "recover_conformal_factor: calibration datum vanished");
  const double ratio = dm.value / dr.value;
  if (!(ratio > 0.0))
    throw std::runtime_error(
        "recover_conformal_factor: datum ratio is not positive");

  ConformalRecovery out;
  out.n = n;
  out.m_exp = m_exp;
  out.exponent = E;
  out.datum = dm.value;
  out.datum_ref = dr.value;
  out.ratio = ratio;
  out.c_est = std::pow(ratio, 1.0 / E);
  out.lambdas = dm.lambdas;
  for (std::size_t i = 0; i < dm.full_terms.size(); ++i)
    out.ratio_per_lambda.push_back(
        std::abs(dr.full_terms[i]) > 1e-300
            ? dm.full_terms[i] / dr.full_terms[i]
            : 0.0);

  // diagnostics: each beam phase, built once on the reference metric and
  // shared by both runs, must satisfy the eikonal equation of the *scaled*
  // metric near the interaction point (inverse metric ginv/c), and an
  // independent reconstruction of the beams must reproduce the combined
  // phase exactly
  const InteractionBeams ib2 = make_interaction(ic);
  Vec one(1);
  one << 1.0;
  std::vector<CombinedPhase> singles;
  singles.reserve(4);
  for (int jb = 0; jb < 4; ++jb)
    singles.emplace_back(
        std::vector<std::shared_ptr<const GaussianBeam>>{ib.beams[jb]}, one,
        y);
  double defect = 0.0, mismatch = 0.0;
  CounterRng rng{909090u};
  for (int k = 0; k < opt.phase_samples; ++k) {
    Vec dx(n + 1);
    for (int i = 0; i <= n; ++i)
      dx(i) = 0.05 * rng.uniform(4 * static_cast<std::uint64_t>(k) + i,
                                 -1.0, 1.0);
    const Vec x = y + dx;
    const cplx s1 = ib.phase->S(x);
    const cplx s2 = ib2.phase->S(x);
    if (std::isfinite(std::abs(s1)) && std::isfinite(std::abs(s2)))
      mismatch = std::max(mismatch, std::abs(s1 - s2));
    const Mat ginv_scaled = g_ref->inverse_metric(x) / c(x);
    for (const CombinedPhase& ph : singles) {
      const CVec p = ph.gradS(x);
      if (!p.allFinite()) continue;
      defect = std::max(defect,
                        std::abs((p.transpose() * ginv_scaled * p)(0)));
    }
  }
  out.eikonal_defect = defect;
  out.phase_mismatch = mismatch;
  return out;
}

}  // namespace gbeam
