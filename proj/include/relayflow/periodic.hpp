#pragma once

// Periodic quasisolutions as roots of a square shooting system. The unknowns
// are omega = (x_0, t_1, ..., t_p); the chain x_i = F_i(t_i, x_{i-1}) must
// visit each switching boundary and close up after p switches.

#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/events.hpp>
#include <relayflow/geometry.hpp>
#include <relayflow/random.hpp>
#include <relayflow/relay.hpp>
#include <relayflow/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace relayflow {

/// Throws NotInWindow unless 0 < t_i < T_i for every i.
inline void check_window(const RelaySystem& s, const SwitchingVector& w) {
  if (w.modes() != s.modes() || w.x.size() != s.dimension()) throw std::invalid_argument("switching vector shape");
  for (int i = 1; i <= s.modes(); ++i) {
    const double t = w.t[i - 1];
    if (!(t > 0.0 && t < s.flow(i).horizon)) {
      throw NotInWindow("t_" + std::to_string(i) + " = " + std::to_string(t) + " outside (0, T_" +
                        std::to_string(i) + ")");
    }
  }
}

/// Points x_0..x_p of the chain encoded by omega.
inline std::vector<Point> switching_chain(const RelaySystem& s, const SwitchingVector& w) {
  check_window(s, w);
  std::vector<Point> xs{w.x};
  for (int i = 1; i <= s.modes(); ++i) xs.push_back(flow_map(s.flow(i), w.t[i - 1], xs.back()));
  return xs;
}

/// (f_0(x_0), f_1(x_1), ..., f_p(x_p)); omega lies in N^lambda iff this equals lambda.
inline Eigen::VectorXd nu(const RelaySystem& s, const SwitchingVector& w) {
  const auto xs = switching_chain(s, w);
  Eigen::VectorXd v(s.modes() + 1);
  for (int i = 0; i <= s.modes(); ++i) v[i] = s.level(i).evaluate(xs[i]);
  return v;
}

inline const Point& nu0(const SwitchingVector& w) { return w.x; }
inline Point nu1(const RelaySystem& s, const SwitchingVector& w) { return switching_chain(s, w).back(); }

struct ProjectionOptions {
  double collar = 0.25;  // largest |f - target| accepted as input
  int max_iterations = 50;
  double tol = kTolLevel;
};

/// Newton steps along the gradient of f onto {f = target}.
inline Point project_to_boundary(const Expression& f, double target, const Point& y, const ProjectionOptions& opt = {}) {
  const double g0 = f.evaluate(y) - target;
  if (std::abs(g0) > opt.collar) throw ProjectionDiverged("point lies outside the projection collar");
  if (std::abs(g0) == 0.0) return y;
  Point z = y;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double g = f.evaluate(z) - target;
    const Point grad = f.gradient(z);
    const double gg = grad.squaredNorm();
    if (gg == 0.0) throw ProjectionDiverged("vanishing gradient during projection");
    z -= (g / gg) * grad;
    const double after = f.evaluate(z) - target;
    if (std::abs(after) > opt.collar) throw ProjectionDiverged("projection left the collar");
    if (std::abs(g) <= opt.tol) return z;
  }
  if (std::abs(f.evaluate(z) - target) <= opt.tol) return z;
  throw ProjectionDiverged("projection did not converge");
}

// ---------------------------------------------------------------------------
// Shooting system

inline Eigen::VectorXd pack(const SwitchingVector& w) {
  Eigen::VectorXd z(w.x.size() + w.t.size());
  z << w.x, w.t;
  return z;
}

inline SwitchingVector unpack(const RelaySystem& s, const Eigen::VectorXd& z) {
  return {z.head(s.dimension()), z.tail(s.modes())};
}

/// (f_i(x_i) - lambda_i for i = 0..p-1, x_p - x_0), length n + p.
inline Eigen::VectorXd shooting_residual(const RelaySystem& s, const Offsets& lambda, const SwitchingVector& w) {
  s.check_offsets(lambda);
  const int n = s.dimension(), p = s.modes();
  const auto xs = switching_chain(s, w);
  Eigen::VectorXd r(n + p);
  for (int i = 0; i < p; ++i) r[i] = s.level(i).evaluate(xs[i]) - lambda[i];
  r.tail(n) = xs[p] - xs[0];
  return r;
}

/// Chain-rule Jacobian of shooting_residual with respect to (x_0, t_1..t_p).
inline Matrix residual_jacobian(const RelaySystem& s, const Offsets& lambda, const SwitchingVector& w) {
  s.check_offsets(lambda);
  check_window(s, w);
  const int n = s.dimension(), p = s.modes();
  Matrix J = Matrix::Zero(n + p, n + p);
  Matrix D = Matrix::Zero(n, n + p);  // d x_i / d omega
  D.leftCols(n).setIdentity();
  Point x = w.x;
  J.row(0) = s.level(0).gradient(x).transpose() * D;
  for (int i = 1; i <= p; ++i) {
    const Flow& flow = s.flow(i);
    const FlowDerivative step = flow_with_jacobian(flow, w.t[i - 1], x);
    x = step.state;
    D = step.jacobian * D;
    D.col(n + i - 1) += flow.field(x);
    if (i < p) J.row(i) = s.level(i).gradient(x).transpose() * D;
  }
  J.bottomRows(n) = D;
  J.bottomLeftCorner(n, n) -= Matrix::Identity(n, n);
  return J;
}

/// Residual used by the solver. With lambda_p == lambda_0 it is the shooting
/// residual; otherwise the end point is first projected onto the boundary of
/// region 0 and the levels f_1..f_p are matched instead of f_0.
inline Eigen::VectorXd solver_residual(const RelaySystem& s, const Offsets& lambda, const SwitchingVector& w) {
  const int p = s.modes();
  if (lambda[p] == lambda[0]) return shooting_residual(s, lambda, w);
  const int n = s.dimension();
  const auto xs = switching_chain(s, w);
  Eigen::VectorXd r(n + p);
  for (int i = 1; i <= p; ++i) r[i - 1] = s.level(i).evaluate(xs[i]) - lambda[i];
  r.tail(n) = project_to_boundary(s.level(0), lambda[0], xs[p]) - xs[0];
  return r;
}

inline Matrix solver_jacobian(const RelaySystem& s, const Offsets& lambda, const SwitchingVector& w) {
  const int p = s.modes();
  if (lambda[p] == lambda[0]) return residual_jacobian(s, lambda, w);
  // The projected closure has no closed-form derivative without second
  // derivatives of f_0; central differences instead.
  const Eigen::VectorXd z = pack(w);
  Matrix J(z.size(), z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(z[j]));
    Eigen::VectorXd zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    J.col(j) = (solver_residual(s, lambda, unpack(s, zp)) - solver_residual(s, lambda, unpack(s, zm))) / (2 * h);
  }
  return J;
}

inline double condition_number(const Matrix& J) {
  const Eigen::JacobiSVD<Matrix> svd(J);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] == 0.0) return std::numeric_limits<double>::infinity();
  return sv[0] / sv[sv.size() - 1];
}

struct NewtonOptions {
  int max_iterations = 40;
  double tolerance = 1e-10;   // on |r|
  double armijo_factor = 0.5;
  double armijo_slope = 1e-4;
  int max_backtracks = 40;
  double window_margin = 1e-6;  // relative to T_i
};

struct NewtonResult {
  Eigen::VectorXd z;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  double condition = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void clamp_times(const RelaySystem& s, Eigen::VectorXd& z, double margin) {
  const int n = s.dimension();
  for (int i = 1; i <= s.modes(); ++i) {
    const double T = s.flow(i).horizon;
    z[n + i - 1] = std::clamp(z[n + i - 1], margin * T, T - margin * T);
  }
}

inline bool on_clamp(const RelaySystem& s, const Eigen::VectorXd& z, double margin) {
  const int n = s.dimension();
  for (int i = 1; i <= s.modes(); ++i) {
    const double T = s.flow(i).horizon;
    const double t = z[n + i - 1];
    if (t <= 2 * margin * T || t >= T - 2 * margin * T) return true;
  }
  return false;
}

}  // namespace detail

/// Damped Newton with Armijo backtracking on |r|^2 / 2. Steps are the
/// minimum-norm least-squares solutions, so continuous families of orbits
/// (singular Jacobians along the family) still converge.
inline NewtonResult newton_solve(const RelaySystem& s, const Offsets& lambda, Eigen::VectorXd z,
                                 const NewtonOptions& opt = {}) {
  NewtonResult res;
  detail::clamp_times(s, z, opt.window_margin);
  auto eval = [&](const Eigen::VectorXd& zz) -> std::optional<Eigen::VectorXd> {
    try {
      Eigen::VectorXd r = solver_residual(s, lambda, unpack(s, zz));
      if (!r.allFinite()) return std::nullopt;
      return r;
    } catch (const IntegrationError&) {
      return std::nullopt;
    } catch (const EvalError&) {
      return std::nullopt;
    } catch (const ProjectionDiverged&) {
      return std::nullopt;
    }
  };
  auto r0 = eval(z);
  if (!r0) {
    res.z = z;
    return res;
  }
  Eigen::VectorXd r = *r0;
  Matrix J;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    if (r.norm() <= opt.tolerance) break;
    try {
      J = solver_jacobian(s, lambda, unpack(s, z));
    } catch (const Error&) {
      break;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(J);
    cod.setThreshold(1e-13);
    const Eigen::VectorXd dz = -cod.solve(r);
    if (!dz.allFinite()) break;
    const double phi = 0.5 * r.squaredNorm();
    const double slope = r.dot(J * dz);
    double alpha = 1.0;
    bool accepted = false;
    for (int b = 0; b < opt.max_backtracks; ++b, alpha *= opt.armijo_factor) {
      Eigen::VectorXd trial = z + alpha * dz;
      detail::clamp_times(s, trial, opt.window_margin);
      const auto rt = eval(trial);
      if (!rt) continue;
      if (0.5 * rt->squaredNorm() <= phi + opt.armijo_slope * alpha * std::min(slope, 0.0) &&
          rt->norm() < r.norm()) {
        z = trial;
        r = *rt;
        accepted = true;
        break;
      }
    }
    res.iterations = it + 1;
    if (!accepted) break;
  }
  res.z = z;
  res.residual_norm = r.norm();
  res.converged = res.residual_norm <= opt.tolerance;
  try {
    res.condition = condition_number(J.size() > 0 ? J : solver_jacobian(s, lambda, unpack(s, z)));
  } catch (const Error&) {
  }
  return res;
}

// ---------------------------------------------------------------------------
// Orbits

struct PeriodicOrbit {
  SwitchingVector omega;
  Offsets lambda;
  double residual_norm = 0.0;
  std::vector<double> margins;  // transversality |grad f . V| per switch
  Matrix monodromy;             // product of segment Jacobians
  Eigen::VectorXd monodromy_moduli;
  double closure = 0.0;
  double condition = 0.0;
  Quasisolution path;

  double period() const { return omega.t.sum(); }
};

struct VerificationReport {
  double closure = 0.0;
  std::vector<double> margins;
  std::vector<int> crossing_indices;
  Matrix monodromy;
  Eigen::VectorXd eigen_moduli;
  Quasisolution replay;
};

/// Replays the orbit as a quasisolution that picks, at each switch, the
/// crossing the orbit encodes, and measures how well it closes.
inline VerificationReport verify_periodic(const RelaySystem& s, const PeriodicOrbit& orbit,
                                          const CrossingOptions& copt = {}) {
  if (!(orbit.residual_norm <= 1e-8)) throw std::invalid_argument("orbit residual exceeds 1e-8");
  const int p = s.modes();
  const Offsets& lambda = orbit.lambda;
  VerificationReport rep;

  Point x = orbit.omega.x;
  for (int i = 1; i <= p; ++i) {
    const Flow& flow = s.flow(i);
    const auto events = find_crossings(flow, s.level(i), lambda[i], x, flow.time_cap(), Orientation::Forward, copt);
    const double ti = orbit.omega.t[i - 1];
    int best = -1;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < events.size(); ++m) {
      const double d = std::abs(events[m].t - ti);
      if (d < gap) {
        gap = d;
        best = static_cast<int>(m);
      }
    }
    if (best < 0 || gap > 1e-6) {
      throw ReplayMismatch("switch " + std::to_string(i) + " time does not match any crossing");
    }
    rep.crossing_indices.push_back(best + 1);
    x = events[best].point;
  }

  rep.replay = simulate(s, lambda, orbit.omega.x, 1 % p, HitSequence{rep.crossing_indices}, StopCriteria{p}, copt);
  if (static_cast<int>(rep.replay.switches.size()) != p) throw ReplayMismatch("replay did not complete p switches");
  for (int i = 0; i < p; ++i) {
    const double dt = rep.replay.segments[i].duration - orbit.omega.t[i];
    if (std::abs(dt) > 1e-6) throw ReplayMismatch("replay picked a different crossing at switch " + std::to_string(i + 1));
    rep.margins.push_back(rep.replay.switches[i].margin);
  }
  Point end = rep.replay.final_state();
  if (lambda[p] != lambda[0]) end = project_to_boundary(s.level(0), lambda[0], end);
  rep.closure = (end - orbit.omega.x).norm();

  const int n = s.dimension();
  rep.monodromy = Matrix::Identity(n, n);
  Point y = orbit.omega.x;
  for (int i = 1; i <= p; ++i) {
    const FlowDerivative d = flow_with_jacobian(s.flow(i), orbit.omega.t[i - 1], y);
    rep.monodromy = d.jacobian * rep.monodromy;
    y = d.state;
  }
  const Eigen::EigenSolver<Matrix> es(rep.monodromy, false);
  rep.eigen_moduli = es.eigenvalues().cwiseAbs();
  std::sort(rep.eigen_moduli.data(), rep.eigen_moduli.data() + rep.eigen_moduli.size(), std::greater<double>());
  return rep;
}

/// Assembles and verifies an orbit from a converged solver state.
inline PeriodicOrbit make_orbit(const RelaySystem& s, const Offsets& lambda, const NewtonResult& nr,
                                const CrossingOptions& copt = {}) {
  PeriodicOrbit o;
  o.omega = unpack(s, nr.z);
  o.lambda = lambda;
  o.residual_norm = nr.residual_norm;
  o.condition = nr.condition;
  const VerificationReport rep = verify_periodic(s, o, copt);
  o.margins = rep.margins;
  o.monodromy = rep.monodromy;
  o.monodromy_moduli = rep.eigen_moduli;
  o.closure = rep.closure;
  o.path = rep.replay;
  return o;
}

/// Points along the orbit, `per_segment` + 1 per switching segment. Dense
/// enough that polyline chords sit well inside the dedupe distance.
inline std::vector<Point> orbit_samples(const RelaySystem& s, const PeriodicOrbit& o, int per_segment = 512) {
  std::vector<Point> pts;
  Point x = o.omega.x;
  for (int i = 1; i <= s.modes(); ++i) {
    const double ti = o.omega.t[i - 1];
    const Trajectory traj = integrate_trajectory(s.flow(i), ti, x);
    for (int j = 0; j <= per_segment; ++j) pts.push_back(traj.at(ti * j / per_segment));
    x = traj.final_state();
  }
  return pts;
}

namespace detail {

inline double point_segment_distance(const Point& q, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double len2 = ab.squaredNorm();
  const double u = len2 == 0.0 ? 0.0 : std::clamp((q - a).dot(ab) / len2, 0.0, 1.0);
  return (q - (a + u * ab)).norm();
}

inline double directed_hausdorff(const std::vector<Point>& from, const std::vector<Point>& to) {
  double worst = 0.0;
  for (const auto& q : from) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < to.size(); ++k) {
      best = std::min(best, point_segment_distance(q, to[k], to[k + 1]));
    }
    if (to.size() == 1) best = (q - to[0]).norm();
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace detail

/// Symmetric Hausdorff distance between sampled orbits (points to polylines).
inline double orbit_distance(const RelaySystem& s, const PeriodicOrbit& a, const PeriodicOrbit& b) {
  const auto pa = orbit_samples(s, a);
  const auto pb = orbit_samples(s, b);
  return std::max(detail::directed_hausdorff(pa, pb), detail::directed_hausdorff(pb, pa));
}

// ---------------------------------------------------------------------------
// Continuation in lambda

struct ContinuationOptions {
  int steps = 16;
  double min_step = 1.0 / 1024.0;  // fraction of the segment
  int corrector_iterations = 12;
  NewtonOptions newton{};
  CrossingOptions crossing{};
};

struct ContinuationPath {
  std::vector<std::pair<Offsets, SwitchingVector>> path;
  std::optional<PeriodicOrbit> endpoint;
  int halvings = 0;
};

/// Linear-in-lambda predictor (tangent of the solution branch) and Newton
/// corrector from lambda_from to lambda_to, halving the step on failure.
inline ContinuationPath continue_lambda(const RelaySystem& s, const SwitchingVector& start, const Offsets& from,
                                        const Offsets& to, const ContinuationOptions& opt = {}) {
  s.check_offsets(from);
  s.check_offsets(to);
  ContinuationPath out;
  out.path.push_back({from, start});
  Eigen::VectorXd z = pack(start);
  const int p = s.modes();
  auto offsets_at = [&](double u) -> Offsets {
    Offsets l = from + u * (to - from);
    if (from[0] == from[p] && to[0] == to[p]) l[p] = l[0];
    return l;
  };

  auto finish = [&](const Offsets& lambda) {
    NewtonResult nr = newton_solve(s, lambda, z, opt.newton);
    if (!nr.converged) throw ContinuationStalled("endpoint corrector failed");
    out.endpoint = make_orbit(s, lambda, nr, opt.crossing);
  };

  if ((to - from).norm() == 0.0) {
    finish(to);
    return out;
  }

  const double base = 1.0 / std::max(1, opt.steps);
  double u = 0.0;
  double h = base;
  while (u < 1.0) {
    h = std::min(h, 1.0 - u);
    const Offsets l0 = offsets_at(u);
    const Offsets l1 = offsets_at(u + h);

    // Tangent predictor: J dz = -(dr/dlambda) dlambda.
    Eigen::VectorXd pred = z;
    try {
      const SwitchingVector w = unpack(s, z);
      const Matrix J = solver_jacobian(s, l0, w);
      const Eigen::VectorXd dr = solver_residual(s, l1, w) - solver_residual(s, l0, w);
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(J);
      const Eigen::VectorXd dz = -cod.solve(dr);
      if (dz.allFinite()) pred = z + dz;
    } catch (const Error&) {
    }

    NewtonOptions nopt = opt.newton;
    nopt.max_iterations = opt.corrector_iterations;
    NewtonResult nr = newton_solve(s, l1, pred, nopt);
    bool ok = nr.converged && !detail::on_clamp(s, nr.z, nopt.window_margin);
    if (ok) {
      z = nr.z;
      u = (u + h >= 1.0) ? 1.0 : u + h;
      out.path.push_back({l1, unpack(s, z)});
      h = std::min(base, 2.0 * h);
    } else {
      h *= 0.5;
      ++out.halvings;
      if (h < opt.min_step) {
        throw ContinuationStalled("continuation step fell below the minimum at lambda fraction " + std::to_string(u));
      }
    }
  }
  finish(to);
  return out;
}

// ---------------------------------------------------------------------------
// Orbit search

struct FindPeriodicOptions {
  enum class Seeding { Auto, Explicit };
  Seeding seeding = Seeding::Auto;
  std::vector<SwitchingVector> seeds;  // Explicit
  int max_seeds = 32;                  // Auto: forward-tree leaves tried at most
  std::uint64_t seed = 0;
  double dedupe_distance = 1e-4;
  double degenerate_condition = 1e12;
  double perturbation = 1e-3;
  double closure_tol = 1e-6;
  NewtonOptions newton{};
  CrossingOptions crossing{};
};

struct SearchStats {
  int seeds_tried = 0;
  int converged = 0;
  int rejected_window = 0;
  int rejected_verification = 0;
  int degenerate = 0;
  int perturbation_retries = 0;
};

namespace detail {

inline std::vector<SwitchingVector> auto_seeds(const RelaySystem& s, const Offsets& lambda,
                                               const FindPeriodicOptions& opt) {
  std::vector<SwitchingVector> seeds;
  const SplitRng rng = SplitRng(opt.seed).split("find_periodic.seeds");
  const auto samples =
      sample_boundary(s.level(0), lambda[0], s.eps_reg(0), s.box(), std::max(opt.max_seeds, 1), rng);
  for (const auto& b : samples) {
    if (static_cast<int>(seeds.size()) >= opt.max_seeds) break;
    try {
      for (auto& w : forward_tree(s, lambda, b.x, opt.crossing).switching_vectors()) {
        if (static_cast<int>(seeds.size()) >= opt.max_seeds) break;
        seeds.push_back(std::move(w));
      }
    } catch (const DegenerateCrossing&) {
    } catch (const IntegrationError&) {
    }
  }
  return seeds;
}

}  // namespace detail

/// Searches for p-periodic quasisolutions from forward-tree leaves (or
/// explicit seeds); converged, verified and deduplicated orbits are returned.
inline std::vector<PeriodicOrbit> find_periodic(const RelaySystem& s, const Offsets& lambda,
                                                const FindPeriodicOptions& opt = {}, SearchStats* stats = nullptr) {
  s.check_offsets(lambda);
  SearchStats local;
  SearchStats& st = stats ? *stats : local;
  const std::vector<SwitchingVector> seeds =
      opt.seeding == FindPeriodicOptions::Seeding::Explicit ? opt.seeds : detail::auto_seeds(s, lambda, opt);
  if (seeds.empty()) {
    throw NoConvergence(opt.seeding == FindPeriodicOptions::Seeding::Explicit
                            ? "explicit seed list is empty"
                            : "no forward-tree leaf lies inside the windows 0 < t_i < T_i");
  }

  const int p = s.modes();
  std::vector<PeriodicOrbit> candidates;
  auto accept = [&](const Offsets& l, const NewtonResult& nr) -> bool {
    if (detail::on_clamp(s, nr.z, opt.newton.window_margin)) {
      ++st.rejected_window;
      return false;
    }
    try {
      PeriodicOrbit o = make_orbit(s, l, nr, opt.crossing);
      const bool margins_ok = std::all_of(o.margins.begin(), o.margins.end(),
                                          [&](double m) { return m > opt.crossing.eps_tan; });
      if (!(o.closure < opt.closure_tol) || !margins_ok) {
        ++st.rejected_verification;
        return false;
      }
      candidates.push_back(std::move(o));
      return true;
    } catch (const Error&) {
      ++st.rejected_verification;
      return false;
    } catch (const std::invalid_argument&) {
      ++st.rejected_verification;
      return false;
    }
  };

  const SplitRng perturb_rng = SplitRng(opt.seed).split("find_periodic.perturb");
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    ++st.seeds_tried;
    const NewtonResult nr = newton_solve(s, lambda, pack(seeds[k]), opt.newton);
    if (nr.converged) {
      ++st.converged;
      accept(lambda, nr);
      continue;
    }
    if (!(nr.condition > opt.degenerate_condition)) continue;
    // Degenerate Jacobian: solve at a nearby offset vector, then continue back.
    ++st.degenerate;
    ++st.perturbation_retries;
    SplitRng rng = perturb_rng.split(static_cast<std::uint64_t>(k));
    Offsets shifted = lambda;
    for (int i = 0; i <= p; ++i) shifted[i] += opt.perturbation * rng.uniform(-1.0, 1.0);
    if (lambda[0] == lambda[p]) shifted[p] = shifted[0];
    const NewtonResult np = newton_solve(s, shifted, nr.z, opt.newton);
    if (!np.converged) continue;
    try {
      ContinuationOptions copt;
      copt.newton = opt.newton;
      copt.crossing = opt.crossing;
      const ContinuationPath path = continue_lambda(s, unpack(s, np.z), shifted, lambda, copt);
      NewtonResult back;
      back.z = pack(path.endpoint->omega);
      back.residual_norm = path.endpoint->residual_norm;
      back.condition = path.endpoint->condition;
      back.converged = true;
      if (accept(lambda, back)) {
        ++st.converged;
        --st.degenerate;
      }
    } catch (const Error&) {
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const PeriodicOrbit& a, const PeriodicOrbit& b) {
    const Eigen::VectorXd za = pack(a.omega), zb = pack(b.omega);
    return std::lexicographical_compare(za.data(), za.data() + za.size(), zb.data(), zb.data() + zb.size());
  });
  std::vector<PeriodicOrbit> orbits;
  for (auto& c : candidates) {
    bool duplicate = false;
    for (const auto& o : orbits) {
      if (orbit_distance(s, c, o) < opt.dedupe_distance) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) orbits.push_back(std::move(c));
  }
  if (orbits.empty()) {
    if (st.degenerate > 0) throw DegenerateJacobian("every seed stalled; degenerate Jacobians persisted after perturbation");
    throw NoConvergence("no seed converged to a verified periodic orbit");
  }
  return orbits;
}

}  // namespace relayflow
