// Internal machinery shared by the sup-norm and C^-1 norm code.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <utility>
#include <vector>

#include "cascade/flatfn.hpp"

namespace cascade::detail {

// sup over [a,b] of |G'| for an oscillation-free G.
double derivative_sup_bound(const FlatFn& group, double a, double b);
// sum of |c| * sup_{[a,b]} t^p e^{-k/t}; dominates |f| on [a,b] for any f.
double magnitude_sup_bound(const FlatFn& f, double a, double b);

// Certified maximum of a function v(t) on [0,1] from point samples.
//
// `sample(t)` returns {v(t), e(t)} with v <= e, and `lipschitz(a,b)` bounds
// |e'| on [a,b]. On each interval e <= (e(a)+e(b))/2 + L(b-a)/2, which is the
// peak of the two Lipschitz cones. When `value_lipschitz(a,b)` bounds |v'| the
// same cone is built on v as well (shifted up by `slack`, the error in the
// sampled v) and the smaller peak is kept. Intervals are bisected, worst
// first, until the largest bound is within refine_rel of the best sample of v.
// Past kEnvelopeStopAfter evaluations it is enough to get within refine_rel of
// the largest sampled e: a loose envelope with fast phases would otherwise need
// ~|theta| cells.
inline constexpr int kEnvelopeStopAfter = 4096;

template <class Sample, class Lipschitz, class ValueLipschitz>
CertifiedValue certify_sup(const std::vector<double>& grid, Sample&& sample, Lipschitz&& lipschitz,
                           ValueLipschitz&& value_lipschitz, double slack, const Resolution& res) {
  struct Cell {
    double a, b, va, vb, ea, eb, bound;
    bool operator<(const Cell& o) const { return bound < o.bound; }
  };
  CertifiedValue out;
  int evaluations = 0;
  double env_max = 0.0;
  auto take = [&](double t) {
    const auto [v, e] = sample(t);
    ++evaluations;
    if (v > out.estimate) {
      out.estimate = v;
      out.argmax = t;
    }
    const double top = std::max(v, e);
    env_max = std::max(env_max, top);
    return std::pair{v, top};
  };
  std::vector<std::pair<double, double>> pts(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) pts[i] = take(grid[i]);
  if (grid.size() == 1) {
    out.bound = out.estimate;
    return out;
  }

  std::priority_queue<Cell> cells;
  auto push = [&](double a, double b, std::pair<double, double> pa, std::pair<double, double> pb) {
    double bound = 0.5 * (pa.second + pb.second) + 0.5 * lipschitz(a, b) * (b - a);
    const double lv = value_lipschitz(a, b);
    if (std::isfinite(lv)) bound = std::min(bound, 0.5 * (pa.first + pb.first) + slack + 0.5 * lv * (b - a));
    cells.push({a, b, pa.first, pb.first, pa.second, pb.second, bound});
  };
  for (std::size_t i = 1; i < grid.size(); ++i) push(grid[i - 1], grid[i], pts[i - 1], pts[i]);

  while (!cells.empty()) {
    const Cell top = cells.top();
    if (top.bound <= out.estimate * (1.0 + res.refine_rel) || evaluations >= res.max_evaluations ||
        top.b - top.a < 1e-14)
      break;
    if (evaluations >= kEnvelopeStopAfter && top.bound <= env_max * (1.0 + res.refine_rel)) break;
    cells.pop();
    const double mid = 0.5 * (top.a + top.b);
    const auto pm = take(mid);
    push(top.a, mid, {top.va, top.ea}, pm);
    push(mid, top.b, pm, {top.vb, top.eb});
  }
  out.bound = std::max(out.estimate, cells.empty() ? 0.0 : cells.top().bound);
  return out;
}

template <class Sample, class Lipschitz>
CertifiedValue certify_sup(const std::vector<double>& grid, Sample&& sample, Lipschitz&& lipschitz,
                           const Resolution& res) {
  return certify_sup(
      grid, sample, lipschitz, [](double, double) { return std::numeric_limits<double>::infinity(); }, 0.0, res);
}

// |f| with the phase-group envelope sum_theta |G_theta|, whose slope is
// bounded by sum_theta sup|G_theta'|.
struct C0Channel {
  explicit C0Channel(const FlatFn& f);
  double value(double t) const;
  double envelope(double t) const;
  double lipschitz(double a, double b) const;
  // Bound on |f'| over [a,b].
  double value_lipschitz(double a, double b) const;

  FlatFn fn;
  std::vector<FlatFn> groups;
  std::vector<std::int64_t> thetas;
};

// Running integral of one phase group, t -> int_0^t G(s) e^{i theta s} ds.
//
// Large |theta|: integration by parts, int_0^t G e^{i theta s} =
//   sum_{k<K} (-1)^k G^(k)(t) e^{i theta t} / (i theta)^{k+1} + R,
// exact boundary terms at 0 vanish by flatness and |R| <= sup|G^(K)| / |theta|^K.
// Otherwise: adaptive Gauss-Kronrod, cumulative from a cached left point.
class GroupPrimitive {
 public:
  GroupPrimitive(FlatFn group, std::int64_t theta, const QuadratureOptions& opts);

  Complex at(double t) const;
  // Upper bound for |at(t)|-ish quantities used in certification.
  double envelope(double t) const;
  // {at(t), envelope(t)} in one pass over the series terms.
  std::pair<Complex, double> sample(double t) const;
  double envelope_lipschitz(double a, double b) const;
  // Certified bound on sup_t |int_0^t G e^{i theta s}| without sampling.
  double crude_bound() const { return crude_; }
  double remainder() const { return remainder_; }
  const FlatFn& integrand() const { return g_; }
  bool uses_series() const { return !derivs_.empty(); }

 private:
  Complex integrate(double a, double b) const;

  FlatFn g_;
  std::int64_t theta_;
  QuadratureOptions opts_;
  double start_ = 0.0;   // integrand below e^{log_floor} on [0, start_]
  double crude_ = 0.0;
  double remainder_ = 0.0;
  std::vector<FlatFn> derivs_;  // G, G', ..., G^(K) when the series is used
  mutable std::map<double, Complex> cache_;
};

// |int_0^t f| for a whole FlatFn, as a sum of group primitives.
struct CMinus1Channel {
  CMinus1Channel(const FlatFn& f, const QuadratureOptions& opts);
  Complex at(double t) const;
  double value(double t) const { return std::abs(at(t)); }
  double envelope(double t) const;
  // {|at(t)|, envelope(t)}.
  std::pair<double, double> sample(double t) const;
  double lipschitz(double a, double b) const;
  // Bound on |f| over [a,b], the slope of the exact primitive.
  double value_lipschitz(double a, double b) const;
  // Largest error of at() against the exact primitive.
  double slack() const;

  std::vector<GroupPrimitive> parts;
  double remainder = 0.0;
};

// Point where the integrand drops below e^{log_floor} (0 when none).
double flat_start(const FlatFn& f, double log_floor);

}  // namespace cascade::detail
