#pragma once

// Regions M_i^lambda = {x : f_i(x) >= lambda_i} given by smooth level
// functions, the relay system that cycles through them, and sampled checks
// of the standing hypotheses on the system.

#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/expr.hpp>
#include <relayflow/random.hpp>
#include <relayflow/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace relayflow {

inline constexpr double kTolLevel = 1e-10;

struct Region {
  Expression f;
  double lambda = 0.0;
  int index = 0;
  double eps_reg = 1e-6;
};

/// f(x) - lambda: positive inside, zero on the boundary, negative outside.
inline double signed_level(const Region& r, const Point& x) { return r.f.evaluate(x) - r.lambda; }
inline double signed_level(const Expression& f, double lambda, const Point& x) { return f.evaluate(x) - lambda; }

/// Cyclic relay of p flows on R^n. Flow k (1..p) carries the state from
/// the boundary of region k-1 to the boundary of region k; region p is
/// region 0 with its own offset lambda_p.
class RelaySystem {
 public:
  RelaySystem() = default;
  RelaySystem(int n, std::vector<Flow> flows, std::vector<Region> regions, Box box, double lambda_p, int beta = 1)
      : n_(n), flows_(std::move(flows)), regions_(std::move(regions)), box_(std::move(box)),
        lambda_p_(lambda_p), beta_(beta) {
    const int p = static_cast<int>(flows_.size());
    if (p < 2) throw std::invalid_argument("a relay system needs p > 1 modes");
    if (n_ < 2) throw std::invalid_argument("a relay system needs dimension n >= 2");
    if (static_cast<int>(regions_.size()) != p) throw std::invalid_argument("need exactly p regions");
    if (box_.dimension() != n_) throw std::invalid_argument("bounding box dimension mismatch");
    if (beta_ < 1 || beta_ > p) throw std::invalid_argument("beta must lie in 1..p");
    for (const auto& f : flows_) {
      if (f.dimension() != n_) throw std::invalid_argument("flow dimension mismatch");
    }
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      if (regions_[i].f.dimension() != n_) throw std::invalid_argument("region dimension mismatch");
      regions_[i].index = static_cast<int>(i);
    }
  }

  int dimension() const noexcept { return n_; }
  int modes() const noexcept { return static_cast<int>(flows_.size()); }
  int beta() const noexcept { return beta_; }
  const Box& box() const noexcept { return box_; }

  /// Flow F_k for k in 1..p.
  const Flow& flow(int k) const {
    if (k < 1 || k > modes()) throw std::out_of_range("flow index must lie in 1..p");
    return flows_[k - 1];
  }
  const std::vector<Flow>& flows() const noexcept { return flows_; }
  const std::vector<Region>& regions() const noexcept { return regions_; }

  /// Level function f_i for i in 0..p, with f_p = f_0.
  const Expression& level(int i) const {
    if (i < 0 || i > modes()) throw std::out_of_range("level index must lie in 0..p");
    return regions_[i == modes() ? 0 : i].f;
  }
  double eps_reg(int i) const { return regions_[i == modes() ? 0 : i].eps_reg; }

  /// Region i in 0..p at the given offsets.
  Region region(int i, const Offsets& lambda) const {
    Region r = regions_[i == modes() ? 0 : i];
    r.lambda = lambda[i];
    r.index = i;
    return r;
  }

  Offsets default_offsets() const {
    Offsets l(modes() + 1);
    for (int i = 0; i < modes(); ++i) l[i] = regions_[i].lambda;
    l[modes()] = lambda_p_;
    return l;
  }

  /// Copy with every horizon T_k multiplied by `factor`.
  RelaySystem with_horizons_scaled(double factor) const {
    if (!(factor > 0.0)) throw std::invalid_argument("horizon scale must be positive");
    RelaySystem out = *this;
    for (auto& f : out.flows_) f.horizon *= factor;
    return out;
  }

  void check_offsets(const Offsets& lambda) const {
    if (lambda.size() != modes() + 1) throw std::invalid_argument("offset vector must have length p+1");
  }

 private:
  int n_ = 0;
  std::vector<Flow> flows_;
  std::vector<Region> regions_;
  Box box_;
  double lambda_p_ = 0.0;
  int beta_ = 1;
};

struct BoundarySample {
  Point x;
  double gradient_norm = 0.0;
};

namespace detail {

inline Point uniform_point(const Box& box, SplitRng& rng) {
  Point x(box.dimension());
  for (int i = 0; i < box.dimension(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
  return x;
}

// Newton projection along the gradient onto {f = lambda}; one polishing step
// after the tolerance is met.
inline bool newton_to_level(const Expression& f, double lambda, Point& y, double tol, int max_iter = 30) {
  for (int it = 0; it < max_iter; ++it) {
    const double g = f.evaluate(y) - lambda;
    const Point grad = f.gradient(y);
    const double gg = grad.squaredNorm();
    if (gg == 0.0) return false;
    y -= (g / gg) * grad;
    if (std::abs(g) <= tol) {
      return std::abs(f.evaluate(y) - lambda) <= tol;
    }
  }
  return std::abs(f.evaluate(y) - lambda) <= tol;
}

inline bool draw_with_sign(const Expression& f, double lambda, const Box& box, SplitRng& rng, bool inside, Point& out,
                           int budget) {
  for (int i = 0; i < budget; ++i) {
    Point x = uniform_point(box, rng);
    double v;
    try {
      v = f.evaluate(x) - lambda;
    } catch (const EvalError&) {
      continue;
    }
    if ((inside && v > 0.0) || (!inside && v < 0.0)) {
      out = std::move(x);
      return true;
    }
  }
  return false;
}

}  // namespace detail

struct SamplingOptions {
  int draw_budget = 200000;  // uniform draws when hunting for an inside or outside point
  int retries = 64;          // attempts per returned sample
};

/// m points on {f = lambda} inside the box: random inside/outside pairs,
/// bisection along the joining segment, then Newton projection along the gradient.
inline std::vector<BoundarySample> sample_boundary(const Expression& f, double lambda, double eps_reg, const Box& box,
                                                   int m, SplitRng rng, SamplingOptions opt = {}) {
  std::vector<BoundarySample> out;
  out.reserve(static_cast<std::size_t>(std::max(m, 0)));
  Point inside, outside;
  if (!detail::draw_with_sign(f, lambda, box, rng, true, inside, opt.draw_budget) ||
      !detail::draw_with_sign(f, lambda, box, rng, false, outside, opt.draw_budget)) {
    throw BoundaryNotFound("no sign change of the level function located in the bounding box");
  }
  for (int k = 0; k < m; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < opt.retries && !ok; ++attempt) {
      if (!detail::draw_with_sign(f, lambda, box, rng, true, inside, opt.draw_budget) ||
          !detail::draw_with_sign(f, lambda, box, rng, false, outside, opt.draw_budget)) {
        break;
      }
      Point a = inside, b = outside;
      try {
        for (int it = 0; it < 60; ++it) {
          const Point mid = 0.5 * (a + b);
          if (f.evaluate(mid) - lambda >= 0.0) {
            a = mid;
          } else {
            b = mid;
          }
        }
        Point y = 0.5 * (a + b);
        if (!detail::newton_to_level(f, lambda, y, kTolLevel)) continue;
        if (!box.contains(y)) continue;
        const double gn = f.gradient(y).norm();
        if (gn < eps_reg) continue;
        out.push_back({y, gn});
        ok = true;
      } catch (const EvalError&) {
        continue;
      }
    }
    if (!ok) throw BoundaryNotFound("boundary sampling exhausted its retry budget");
  }
  return out;
}

inline std::vector<BoundarySample> sample_boundary(const Region& r, const Box& box, int m, SplitRng rng,
                                                   SamplingOptions opt = {}) {
  return sample_boundary(r.f, r.lambda, r.eps_reg, box, m, std::move(rng), opt);
}

/// Uniform rejection samples of {f >= lambda} within the box.
inline std::vector<Point> sample_interior(const Expression& f, double lambda, const Box& box, int m, SplitRng rng,
                                          int budget = 200000) {
  std::vector<Point> out;
  for (int k = 0; k < m; ++k) {
    Point x;
    if (!detail::draw_with_sign(f, lambda, box, rng, true, x, budget)) {
      throw BoundaryNotFound("region has no interior points in the bounding box");
    }
    out.push_back(std::move(x));
  }
  return out;
}

/// Composes e with the smooth odd clamp s(u) = (eps/3) tanh(3u/eps):
/// s(0) = 0, s'(0) = 1, |s| < eps/3, and the zero set is unchanged.
inline Expression saturate_level(const Expression& e, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("saturation width must be positive");
  const int n = e.dimension();
  const Expression scaled = Expression::constant(3.0 / eps, n) * e;
  return Expression::constant(eps / 3.0, n) * Expression::unary(Op::Tanh, scaled);
}

// ---------------------------------------------------------------------------
// Hypothesis validation

struct ConditionResult {
  std::string condition;  // "i", "ii", "Mbeta", "regularity"
  int k = 0;              // mode (i, ii), beta (Mbeta) or level index (regularity)
  bool pass = false;
  double margin = 0.0;    // signed robustness; positive means satisfied
  Point witness;          // sample attaining the worst margin
};

struct ValidationReport {
  std::vector<ConditionResult> results;

  bool passed() const {
    return std::all_of(results.begin(), results.end(), [](const ConditionResult& r) { return r.pass; });
  }
  bool passed(const std::string& condition) const {
    return std::all_of(results.begin(), results.end(),
                       [&](const ConditionResult& r) { return r.condition != condition || r.pass; });
  }
  std::vector<ConditionResult> failures() const {
    std::vector<ConditionResult> f;
    for (const auto& r : results) {
      if (!r.pass) f.push_back(r);
    }
    return f;
  }
};

struct ValidationOptions {
  int samples = 256;
  int grid = 16;          // time grid points on [T_beta, t_max]
  double t_max = 0.0;     // <= T_beta checks only F_beta(T_beta, M_{beta-1})
  std::uint64_t seed = 0;
};

/// Sampled margins for (i) boundary k-1 misses region k, (ii) flow k carries
/// boundary k-1 into the interior of region k within T_k, (Mbeta) flow beta
/// keeps region beta-1 inside region beta for t in [T_beta, t_max], and the
/// gradient floor on every sampled boundary.
inline ValidationReport validate_system(const RelaySystem& s, const Offsets& lambda, const ValidationOptions& opt = {}) {
  s.check_offsets(lambda);
  const int p = s.modes();
  const SplitRng root(opt.seed);
  ValidationReport report;

  std::vector<std::vector<BoundarySample>> boundary(static_cast<std::size_t>(p + 1));
  for (int i = 0; i <= p; ++i) {
    ConditionResult reg{"regularity", i, false, -s.eps_reg(i), Point()};
    try {
      boundary[i] =
          sample_boundary(s.level(i), lambda[i], s.eps_reg(i), s.box(), opt.samples, root.split("boundary").split(i));
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& b : boundary[i]) {
        if (b.gradient_norm < worst) {
          worst = b.gradient_norm;
          reg.witness = b.x;
        }
      }
      reg.margin = worst - s.eps_reg(i);
      reg.pass = reg.margin > 0.0;
    } catch (const BoundaryNotFound&) {
      reg.pass = false;
    }
    report.results.push_back(reg);
  }

  for (int k = 1; k <= p; ++k) {
    const auto& from = boundary[k - 1];
    ConditionResult ci{"i", k, false, std::numeric_limits<double>::infinity(), Point()};
    ConditionResult cii{"ii", k, false, std::numeric_limits<double>::infinity(), Point()};
    const Flow& flow = s.flow(k);
    for (const auto& b : from) {
      const double inside = s.level(k).evaluate(b.x) - lambda[k];
      if (-inside < ci.margin) {
        ci.margin = -inside;
        ci.witness = b.x;
      }
      const Point y = flow_map(flow, flow.horizon, b.x);
      const double arrived = s.level(k).evaluate(y) - lambda[k];
      if (arrived < cii.margin) {
        cii.margin = arrived;
        cii.witness = b.x;
      }
    }
    if (from.empty()) {
      ci.margin = cii.margin = -std::numeric_limits<double>::infinity();
    }
    ci.pass = ci.margin > 0.0;
    cii.pass = cii.margin > 0.0;
    report.results.push_back(ci);
    report.results.push_back(cii);
  }

  {
    const int beta = s.beta();
    const Flow& flow = s.flow(beta);
    const double T = flow.horizon;
    const double t_max = std::max(opt.t_max, T);
    ConditionResult cb{"Mbeta", beta, false, std::numeric_limits<double>::infinity(), Point()};
    std::vector<Point> starts;
    try {
      starts = sample_interior(s.level(beta - 1), lambda[beta - 1], s.box(), opt.samples, root.split("interior"));
    } catch (const BoundaryNotFound&) {
    }
    for (const auto& b : boundary[beta - 1]) starts.push_back(b.x);
    const int grid = t_max > T ? std::max(opt.grid, 2) : 1;
    for (const auto& x : starts) {
      const Trajectory traj = integrate_trajectory(flow, t_max, x);
      for (int g = 0; g < grid; ++g) {
        const double t = grid == 1 ? T : T + (t_max - T) * g / (grid - 1);
        const double v = s.level(beta).evaluate(dense_eval(traj, t)) - lambda[beta];
        if (v < cb.margin) {
          cb.margin = v;
          cb.witness = x;
        }
      }
    }
    if (starts.empty()) cb.margin = -std::numeric_limits<double>::infinity();
    cb.pass = cb.margin > 0.0;
    report.results.push_back(cb);
  }
  return report;
}

}  // namespace relayflow
