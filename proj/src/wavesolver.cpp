#include "gbeam/wavesolver.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace gbeam {

namespace {

// visit every multi-index of `shape` in row-major order
template <class F>
void for_grid(const std::vector<int>& shape, F&& fn) {
  std::vector<int> idx(shape.size(), 0);
  for (;;) {
    fn(idx);
    int a = static_cast<int>(shape.size()) - 1;
    while (a >= 0) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
      --a;
    }
    if (a < 0) return;
  }
}

double space_interp(const WaveField& wf, const std::vector<double>& level,
                    const Vec& xs) {
  const int n = wf.n;
  std::vector<int> base(n);
  std::vector<double> frac(n);
  for (int a = 0; a < n; ++a) {
    const double rel = (xs[a] - wf.lo[a]) / wf.dx(a);
    if (rel < 0.0 || rel > wf.shape[a] - 1) return 0.0;
    const int b = std::min(static_cast<int>(std::floor(rel)), wf.shape[a] - 2);
    base[a] = b;
    frac[a] = rel - b;
  }
  double acc = 0.0;
  std::vector<int> idx(n);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double wgt = 1.0;
    for (int a = 0; a < n; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] = base[a] + bit;
      wgt *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (wgt != 0.0) acc += wgt * level[wf.flat(idx)];
  }
  return acc;
}

// trapezoid weights over a (possibly non-uniform) time grid
std::vector<double> time_weights(const std::vector<double>& t) {
  std::vector<double> w(t.size(), 0.0);
  if (t.size() < 2) return w;
  for (size_t k = 0; k + 1 < t.size(); ++k) {
    const double half = 0.5 * (t[k + 1] - t[k]);
    w[k] += half;
    w[k + 1] += half;
  }
  return w;
}

}  // namespace

// ----------------------------------------------------------------- field ---
double WaveField::dx(int axis) const {
  return (hi[axis] - lo[axis]) / (shape[axis] - 1);
}

size_t WaveField::flat(const std::vector<int>& idx) const {
  size_t f = 0;
  for (size_t a = 0; a < idx.size(); ++a)
    f = f * static_cast<size_t>(shape[a]) + static_cast<size_t>(idx[a]);
  return f;
}

double WaveField::value(double t, const Vec& xs) const {
  if (times.empty()) return 0.0;
  if (t < times.front() - 1e-12 || t > times.back() + 1e-12) return 0.0;
  if (times.size() == 1) return space_interp(*this, data[0], xs);
  auto it = std::upper_bound(times.begin(), times.end(), t);
  int k = static_cast<int>(it - times.begin()) - 1;
  k = std::max(0, std::min(k, static_cast<int>(times.size()) - 2));
  const double span = times[k + 1] - times[k];
  const double ft = span > 0.0 ? (t - times[k]) / span : 0.0;
  const double v0 = space_interp(*this, data[k], xs);
  const double v1 = space_interp(*this, data[k + 1], xs);
  return (1.0 - ft) * v0 + ft * v1;
}

double WaveField::max_abs() const {
  double m = 0.0;
  for (const auto& level : data)
    for (double v : level) m = std::max(m, std::abs(v));
  return m;
}

double WaveField::integrate_against(const SpaceTimeFn& h) const {
  const std::vector<double> tw = time_weights(times);
  double total = 0.0;
  Vec xs(n);
  for (size_t k = 0; k < times.size(); ++k) {
    if (tw[k] == 0.0) continue;
    double acc = 0.0;
    size_t f = 0;
    std::vector<int> idx(n, 0);
    for_grid(shape, [&](const std::vector<int>& id) {
      for (int a = 0; a < n; ++a) xs[a] = lo[a] + id[a] * dx(a);
      const double u = data[k][f];
      if (u != 0.0) acc += u * h(times[k], xs) * cellw[f];
      ++f;
    });
    total += tw[k] * acc;
  }
  return total;
}

double WaveField::pair_integral(const std::vector<const WaveField*>& fields) {
  if (fields.empty()) return 0.0;
  const WaveField& ref = *fields[0];
  for (const WaveField* f : fields) {
    if (f->times.size() != ref.times.size() ||
        f->data[0].size() != ref.data[0].size())
      throw std::invalid_argument("pair_integral: fields on different grids");
  }
  const std::vector<double> tw = time_weights(ref.times);
  double total = 0.0;
  for (size_t k = 0; k < ref.times.size(); ++k) {
    if (tw[k] == 0.0) continue;
    double acc = 0.0;
    for (size_t f = 0; f < ref.data[k].size(); ++f) {
      double prod = ref.cellw[f];
      for (const WaveField* fd : fields) prod *= fd->data[k][f];
      acc += prod;
    }
    total += tw[k] * acc;
  }
  return total;
}

// ---------------------------------------------------------------- solver ---
WaveSolver::WaveSolver(MetricPtr m, WaveDomain dom)
    : m_(std::move(m)), dom_(std::move(dom)) {
  n_ = m_->n;
  if (dom_.lo.size() != n_ || dom_.hi.size() != n_)
    throw std::invalid_argument("WaveSolver: domain box dimension mismatch");
  if (dom_.nx < 4) throw std::invalid_argument("WaveSolver: nx too small");
  if (!(dom_.t1 > dom_.t0))
    throw std::invalid_argument("WaveSolver: need t1 > t0");
  shape_.assign(n_, dom_.nx);

  // CFL bound from the largest local characteristic speed on a coarse sample
  double vmax = 0.0;
  const int coarse = std::max(2, dom_.nx / 8);
  std::vector<int> cshape(n_, coarse);
  Vec x(n_ + 1);
  for (double t : {dom_.t0, 0.5 * (dom_.t0 + dom_.t1), dom_.t1}) {
    for_grid(cshape, [&](const std::vector<int>& idx) {
      x[0] = t;
      for (int a = 0; a < n_; ++a)
        x[a + 1] =
            dom_.lo[a] + idx[a] * (dom_.hi[a] - dom_.lo[a]) / (coarse - 1);
      const Mat gi = m_->inverse_metric(x);
      for (int a = 0; a < n_; ++a)
        vmax = std::max(vmax, std::sqrt(-gi(a + 1, a + 1) / gi(0, 0)));
    });
  }
  double dxmin = dxa(0);
  for (int a = 1; a < n_; ++a) dxmin = std::min(dxmin, dxa(a));
  const double dt_target =
      dom_.cfl * dxmin / (vmax * std::sqrt(static_cast<double>(n_)));
  nt_ = std::max(2, static_cast<int>(std::ceil((dom_.t1 - dom_.t0) / dt_target)));
  dt_ = (dom_.t1 - dom_.t0) / nt_;

  static_metric_ = m_->time_independent();
  if (static_metric_) coefficients(dom_.t0, alpha_, wvol_, beta_);
}

double WaveSolver::dxa(int axis) const {
  return (dom_.hi[axis] - dom_.lo[axis]) / (dom_.nx - 1);
}

void WaveSolver::coefficients(double t, std::vector<double>& alpha,
                              std::vector<double>& wvol,
                              std::vector<std::vector<double>>& beta) const {
  size_t sz = 1;
  for (int s : shape_) sz *= static_cast<size_t>(s);
  alpha.assign(sz, 0.0);
  wvol.assign(sz, 0.0);
  std::vector<std::vector<double>> cax(n_, std::vector<double>(sz, 0.0));

  Vec x(n_ + 1);
  size_t f = 0;
  for_grid(shape_, [&](const std::vector<int>& idx) {
    x[0] = t;
    for (int a = 0; a < n_; ++a) x[a + 1] = dom_.lo[a] + idx[a] * dxa(a);
    const Mat g = m_->metric_at(x);
    for (int i = 1; i <= n_; ++i)
      if (std::abs(g(0, i)) > 1e-10)
        throw std::runtime_error(
            "WaveSolver: metric has time-space cross terms");
    const Mat gi = g.inverse();
    const double sq = std::sqrt(std::abs(g.determinant()));
    alpha[f] = -gi(0, 0) * sq;
    wvol[f] = sq;
    for (int a = 0; a < n_; ++a) cax[a][f] = gi(a + 1, a + 1) * sq;
    ++f;
  });

  std::vector<size_t> stride(n_, 1);
  for (int a = n_ - 2; a >= 0; --a)
    stride[a] = stride[a + 1] * static_cast<size_t>(shape_[a + 1]);
  beta.assign(n_, std::vector<double>(sz, 0.0));
  f = 0;
  for_grid(shape_, [&](const std::vector<int>& idx) {
    for (int a = 0; a < n_; ++a)
      if (idx[a] + 1 < shape_[a])
        beta[a][f] = 0.5 * (cax[a][f] + cax[a][f + stride[a]]);
    ++f;
  });
}

WaveField WaveSolver::solve(const SpaceTimeFn& f, const Nonlinearity& nl,
                            bool adjoint) const {
  size_t sz = 1;
  for (int s : shape_) sz *= static_cast<size_t>(s);
  std::vector<size_t> stride(n_, 1);
  for (int a = n_ - 2; a >= 0; --a)
    stride[a] = stride[a + 1] * static_cast<size_t>(shape_[a + 1]);

  std::vector<char> interior(sz, 1);
  std::vector<double> pts(sz * static_cast<size_t>(n_));
  {
    size_t fi = 0;
    for_grid(shape_, [&](const std::vector<int>& idx) {
      for (int a = 0; a < n_; ++a) {
        pts[fi * n_ + a] = dom_.lo[a] + idx[a] * dxa(a);
        if (idx[a] == 0 || idx[a] + 1 == shape_[a]) interior[fi] = 0;
      }
      ++fi;
    });
  }

  // coefficient arrays: aliases of the static caches, or per-step locals
  std::vector<double> a_loc, w_loc;
  std::vector<std::vector<double>> b_loc;
  const std::vector<double>& A = static_metric_ ? alpha_ : a_loc;
  const std::vector<double>& W = static_metric_ ? wvol_ : w_loc;
  const std::vector<std::vector<double>>& B = static_metric_ ? beta_ : b_loc;

  std::vector<double> invdx2(n_);
  for (int a = 0; a < n_; ++a) invdx2[a] = 1.0 / (dxa(a) * dxa(a));
  const double dt2 = dt_ * dt_;

  WaveField out;
  out.n = n_;
  out.lo = dom_.lo;
  out.hi = dom_.hi;
  out.shape = shape_;

  std::vector<double> um(sz, 0.0), uc(sz, 0.0), up(sz, 0.0);
  auto level_time = [&](int k) {
    return adjoint ? dom_.t1 - k * dt_ : dom_.t0 + k * dt_;
  };
  out.times.push_back(level_time(0));
  out.data.push_back(uc);

  Vec xs(n_);
  for (int k = 0; k < nt_; ++k) {
    const double tk = level_time(k);
    if (!static_metric_) coefficients(tk, a_loc, w_loc, b_loc);
    if (k == 0) {
      out.cellw.assign(sz, 0.0);
      double dxprod = 1.0;
      for (int a = 0; a < n_; ++a) dxprod *= dxa(a);
      for (size_t i = 0; i < sz; ++i) out.cellw[i] = W[i] * dxprod;
    }
    for (size_t i = 0; i < sz; ++i) {
      if (!interior[i]) {
        up[i] = 0.0;
        continue;
      }
      double lap = 0.0;
      for (int a = 0; a < n_; ++a) {
        const size_t s = stride[a];
        lap += (B[a][i] * (uc[i + s] - uc[i]) -
                B[a][i - s] * (uc[i] - uc[i - s])) *
               invdx2[a];
      }
      double nlv = 0.0;
      for (const auto& term : nl) {
        double p = 1.0;
        for (int j = 0; j < term.first; ++j) p *= uc[i];
        nlv += term.second * p;
      }
      for (int a = 0; a < n_; ++a) xs[a] = pts[i * n_ + a];
      const double src = f(tk, xs);
      up[i] = 2.0 * uc[i] - um[i] + dt2 / A[i] * (lap + W[i] * (nlv - src));
    }
    std::swap(um, uc);
    std::swap(uc, up);
    if ((k + 1) % dom_.store_stride == 0 || k + 1 == nt_) {
      out.times.push_back(level_time(k + 1));
      out.data.push_back(uc);
    }
  }

  if (adjoint) {
    std::reverse(out.times.begin(), out.times.end());
    std::reverse(out.data.begin(), out.data.end());
  }
  return out;
}

SpaceTimeFn spacetime_blob(double amplitude, double tc, Vec xc, double sigma) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  return [amplitude, tc, xc = std::move(xc), inv2s2](double t, const Vec& xs) {
    const double r2 = (t - tc) * (t - tc) + (xs - xc).squaredNorm();
    return amplitude * std::exp(-r2 * inv2s2);
  };
}

}  // namespace gbeam
