// ---------------------------------------------------------------------------
// util.hpp -- shared numerics helpers: deterministic counter RNG, line fits,
//             1-D minimization / root bracketing, hashing, grid construction.
// ---------------------------------------------------------------------------
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbeam {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

// ------------------------------------------------------------ counter RNG ---
// Stateless counter-based generator ("splitmix64-counter"): a pure hash of
// (seed, counter).  Identical streams regardless of evaluation order, so
// serial and parallel sweeps draw the same numbers.
struct CounterRng {
  std::uint64_t seed = 0;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  std::uint64_t bits(std::uint64_t counter) const {
    return mix(mix(seed) ^ mix(counter + 0x517cc1b727220a95ull));
  }
  // uniform in [0,1)
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }
  // uniform in [a,b)
  double uniform(std::uint64_t counter, double a, double b) const {
    return a + (b - a) * uniform(counter);
  }
  // standard normal (Box-Muller on two derived counters)
  double normal(std::uint64_t counter) const {
    double u1 = uniform(counter * 2 + 1);
    double u2 = uniform(counter * 2 + 2);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
};

// ------------------------------------------------------------- hashing ------
// FNV-1a over bytes; used for config hashes in run manifests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// ------------------------------------------------------------- line fits ----
// Least-squares fit y = a + b*x.  Returns {a, b}.
inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need >=2 samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-300) throw std::runtime_error("fit_line: degenerate");
  const double b = (n * sxy - sx * sy) / det;
  const double a = (sy - b * sx) / n;
  return {a, b};
}

// Log-log slope of y vs x (both positive).
inline double loglog_slope(const std::vector<double>& x,
                           const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(std::abs(y[i]));
  }
  return fit_line(lx, ly).second;
}

// Least-squares fit v = a + b*lambda^(-1/2); returns {a, b}.  This is the
// extrapolation used for the oscillatory-integral sweeps, where the leading
// finite-frequency correction carries a half-power.
inline std::pair<double, double> fit_half_power(const std::vector<double>& lambda,
                                                const std::vector<double>& v) {
  std::vector<double> x(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) x[i] = 1.0 / std::sqrt(lambda[i]);
  return fit_line(x, v);
}

// ------------------------------------------------- 1-D search primitives ----
// Golden-section minimization on [a,b]; f assumed unimodal near the minimum.
inline double golden_min(const std::function<double(double)>& f, double a,
                         double b, double tol = 1e-12, int max_iter = 200) {
  const double gr = 0.6180339887498949;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

// Bisection for a boolean predicate switching false->true on [lo,hi]:
// returns the switch point with `depth` halvings.  pred(hi) must be true.
inline double bisect_switch(const std::function<bool(double)>& pred, double lo,
                            double hi, int depth = 60) {
  for (int i = 0; i < depth; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Scalar root of f on [a,b] with f(a), f(b) of opposite sign (bisection +
// secant polish).
inline double bracket_root(const std::function<double(double)>& f, double a,
                           double b, double tol = 1e-13, int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0) return a;
  if (fb == 0) return b;
  if (fa * fb > 0) throw std::invalid_argument("bracket_root: no sign change");
  for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
    double m = 0.5 * (a + b);
    double fm = f(m);
    if (fm == 0) return m;
    if (fa * fm < 0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
  }
  return 0.5 * (a + b);
}

// ------------------------------------------------------------------ grids ---
inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

// Midpoint grid with n cells on [a,b] (nodes at cell centers).
inline std::vector<double> midpoints(double a, double b, int n) {
  std::vector<double> v(n);
  const double h = (b - a) / n;
  for (int i = 0; i < n; ++i) v[i] = a + (i + 0.5) * h;
  return v;
}

// Smooth cutoff: 1 for t<=a, 0 for t>=b, C^inf transition in between.
inline double smoothstep_cinf(double t, double a, double b) {
  if (t <= a) return 1.0;
  if (t >= b) return 0.0;
  const double s = (t - a) / (b - a);  // in (0,1)
  const double e1 = std::exp(-1.0 / s);
  const double e2 = std::exp(-1.0 / (1.0 - s));
  return e2 / (e1 + e2);
}

}  // namespace gbeam
