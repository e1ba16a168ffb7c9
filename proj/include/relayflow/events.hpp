#pragma once

// Boundary crossings of flow trajectories, the recursive crossing trees that
// enumerate the switching vectors above a boundary point, and parity counts.

#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/geometry.hpp>
#include <relayflow/types.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace relayflow {

enum class Orientation { Forward, Backward };

struct CrossingOptions {
  double tol_level = kTolLevel;
  double eps_tan = 1e-8;
  double t_sep_rel = 1e-7;  // minimum root separation as a fraction of the window
  int oversample = 8;
  int oversample_max = 64;
};

struct CrossingEvent {
  double t = 0.0;      // elapsed time inside the window, always positive
  Point point;
  int direction = 0;   // sign of d/dt f along the travelled direction
  double margin = 0.0; // |grad f . V| at the crossing
};

namespace detail {

struct ScanSample {
  double s;
  double g;
  double gdot;
};

// Root of g on [a.s, b.s] within one step using the dense interpolant;
// Illinois false position with a bisection fallback.
inline double polish_root(const Trajectory::Step& st, const Expression& f, double lambda, ScanSample a, ScanSample b,
                          double tol) {
  auto g = [&](double s) { return f.evaluate(Trajectory::interpolate(st, s)) - lambda; };
  double sa = a.s, ga = a.g, sb = b.s, gb = b.g;
  int side = 0;
  double best = std::abs(ga) < std::abs(gb) ? sa : sb;
  double best_g = std::min(std::abs(ga), std::abs(gb));
  for (int it = 0; it < 200; ++it) {
    double sc = (sa * gb - sb * ga) / (gb - ga);
    if (!(sc > sa && sc < sb) || it % 8 == 7) sc = 0.5 * (sa + sb);
    const double gc = g(sc);
    if (std::abs(gc) < best_g) {
      best_g = std::abs(gc);
      best = sc;
    }
    if (best_g <= 0.01 * tol || sb - sa <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, sb)) break;
    if ((gc > 0.0) == (gb > 0.0)) {
      sb = sc;
      gb = gc;
      if (side == -1) ga *= 0.5;
      side = -1;
    } else {
      sa = sc;
      ga = gc;
      if (side == 1) gb *= 0.5;
      side = 1;
    }
  }
  return best;
}

// Cubic Hermite model of g on one sub-interval; true when the model dips to
// (or through) zero between two samples of the same sign.
inline bool hermite_suspect(const ScanSample& a, const ScanSample& b, double tol) {
  if ((a.gdot > 0.0) == (b.gdot > 0.0)) return false;
  const double h = b.s - a.s;
  const double m0 = a.gdot * h, m1 = b.gdot * h;
  // p(u) = h00 g0 + h10 m0 + h01 g1 + h11 m1, u in [0,1]
  const double c3 = 2 * a.g + m0 - 2 * b.g + m1;
  const double c2 = -3 * a.g - 2 * m0 + 3 * b.g - m1;
  const double c1 = m0;
  const double c0 = a.g;
  auto p = [&](double u) { return ((c3 * u + c2) * u + c1) * u + c0; };
  // p'(u) = 3 c3 u^2 + 2 c2 u + c1
  const double qa = 3 * c3, qb = 2 * c2, qc = c1;
  std::vector<double> us;
  if (std::abs(qa) < 1e-300) {
    if (qb != 0.0) us.push_back(-qc / qb);
  } else {
    const double disc = qb * qb - 4 * qa * qc;
    if (disc >= 0.0) {
      const double r = std::sqrt(disc);
      us.push_back((-qb - r) / (2 * qa));
      us.push_back((-qb + r) / (2 * qa));
    }
  }
  for (double u : us) {
    if (u <= 0.0 || u >= 1.0) continue;
    const double v = p(u);
    if (std::abs(v) <= tol || (v > 0.0) != (a.g > 0.0)) return true;
  }
  return false;
}

}  // namespace detail

/// Roots of g(t) = f(traj(t)) - lambda for t in (0, T) on an already
/// integrated trajectory of `flow` whose span covers T.
inline std::vector<CrossingEvent> crossings_along(const Trajectory& traj, const Flow& flow, const Expression& f,
                                                  double lambda, double T, const CrossingOptions& opt = {}) {
  if (!(T > 0.0)) throw std::invalid_argument("crossing window must be positive");
  if (traj.span() < T) throw OutOfSpan("trajectory does not cover the crossing window");
  const double g0 = f.evaluate(traj.initial()) - lambda;
  if (std::abs(g0) <= opt.tol_level) throw std::invalid_argument("start point lies on the switching surface");
  const double sign = traj.sign();

  auto sample = [&](const Trajectory::Step& st, double s) {
    const Point y = Trajectory::interpolate(st, s);
    const double g = f.evaluate(y) - lambda;
    const double gdot = sign * f.gradient(y).dot(flow.field(y));
    return detail::ScanSample{s, g, gdot};
  };

  const double t_sep = opt.t_sep_rel * T;
  for (int ns = std::max(1, opt.oversample);; ns *= 2) {
    bool suspect = false;
    std::vector<std::pair<const Trajectory::Step*, std::pair<detail::ScanSample, detail::ScanSample>>> brackets;
    std::vector<std::pair<const Trajectory::Step*, double>> exact;
    for (const auto& st : traj.steps()) {
      if (st.s0 >= T) break;
      detail::ScanSample prev = sample(st, st.s0);
      for (int j = 1; j <= ns; ++j) {
        const double s = j == ns ? st.s0 + st.h : st.s0 + st.h * j / ns;
        const detail::ScanSample cur = sample(st, s);
        if (cur.g == 0.0 && s < T) {
          exact.push_back({&st, s});
        } else if (prev.g != 0.0 && (prev.g > 0.0) != (cur.g > 0.0)) {
          brackets.push_back({&st, {prev, cur}});
        } else if (prev.g != 0.0 && detail::hermite_suspect(prev, cur, opt.tol_level)) {
          suspect = true;
        }
        prev = cur;
      }
    }
    if (suspect && ns < opt.oversample_max) continue;
    if (suspect) throw DegenerateCrossing("near-tangent approach to the switching surface could not be resolved");

    std::vector<CrossingEvent> events;
    auto finish = [&](const Trajectory::Step& st, double s) {
      const Point y = Trajectory::interpolate(st, s);
      const double gdot = sign * f.gradient(y).dot(flow.field(y));
      CrossingEvent ev;
      ev.t = s;
      ev.point = y;
      ev.direction = gdot > 0.0 ? 1 : (gdot < 0.0 ? -1 : 0);
      ev.margin = std::abs(gdot);
      events.push_back(std::move(ev));
    };
    for (const auto& [st, s] : exact) finish(*st, s);
    for (const auto& [st, ab] : brackets) finish(*st, detail::polish_root(*st, f, lambda, ab.first, ab.second, opt.tol_level));
    std::sort(events.begin(), events.end(), [](const CrossingEvent& a, const CrossingEvent& b) { return a.t < b.t; });
    events.erase(std::remove_if(events.begin(), events.end(),
                                [&](const CrossingEvent& e) { return !(e.t > 0.0 && e.t < T); }),
                 events.end());

    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].margin <= opt.eps_tan) {
        throw DegenerateCrossing("tangential crossing at t = " + std::to_string(events[i].t));
      }
      if (i > 0 && events[i].t - events[i - 1].t <= t_sep) {
        throw DegenerateCrossing("crossings closer than the separation threshold near t = " +
                                 std::to_string(events[i].t));
      }
    }
    return events;
  }
}

/// All roots of g(t) = f(F^{+-t}(x)) - lambda in (0, T), sorted by t.
inline std::vector<CrossingEvent> find_crossings(const Flow& flow, const Expression& f, double lambda, const Point& x,
                                                 double T, Orientation orientation, const CrossingOptions& opt = {}) {
  if (!(T > 0.0)) throw std::invalid_argument("crossing window must be positive");
  if (std::abs(f.evaluate(x) - lambda) <= opt.tol_level) {
    throw std::invalid_argument("start point lies on the switching surface");
  }
  const double sign = orientation == Orientation::Forward ? 1.0 : -1.0;
  return crossings_along(integrate_trajectory(flow, sign * T, x), flow, f, lambda, T, opt);
}

// ---------------------------------------------------------------------------
// Switching vectors and crossing trees

/// omega = (x, t_1, ..., t_p).
struct SwitchingVector {
  Point x;
  Eigen::VectorXd t;

  int modes() const noexcept { return static_cast<int>(t.size()); }
};

struct CrossingTree {
  struct Node {
    Point point;
    int stage = 0;
    int parent = -1;
    Eigen::VectorXd times;  // t_k by flow index k-1; entries of unvisited stages are zero
    double margin = 0.0;
  };

  Point root;
  bool forward = true;
  std::vector<Node> nodes;
  std::vector<int> leaves;
  bool consistent = true;  // forward: every expansion had an odd number of children

  std::size_t leaf_count() const noexcept { return leaves.size(); }

  /// Switching vectors (x_0, t) of the leaves, in tree order.
  std::vector<SwitchingVector> switching_vectors() const {
    std::vector<SwitchingVector> out;
    for (int leaf : leaves) {
      const Node& n = nodes[leaf];
      out.push_back({forward ? root : n.point, n.times});
    }
    return out;
  }

  double min_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes) {
      if (n.parent >= 0) m = std::min(m, n.margin);
    }
    return m;
  }
};

/// Expands R_0^j(x) stage by stage with the forward flows 1..p.
inline CrossingTree forward_tree(const RelaySystem& s, const Offsets& lambda, const Point& x,
                                 const CrossingOptions& opt = {}) {
  s.check_offsets(lambda);
  const int p = s.modes();
  if (std::abs(s.level(0).evaluate(x) - lambda[0]) > opt.tol_level) {
    throw std::invalid_argument("forward tree root must lie on the boundary of region 0");
  }
  CrossingTree tree;
  tree.root = x;
  tree.forward = true;
  tree.nodes.push_back({x, 0, -1, Eigen::VectorXd::Zero(p), 0.0});
  std::vector<int> frontier{0};
  for (int j = 1; j <= p; ++j) {
    std::vector<int> next;
    const Flow& flow = s.flow(j);
    for (int id : frontier) {
      const Point start = tree.nodes[id].point;
      std::vector<CrossingEvent> events;
      try {
        events = find_crossings(flow, s.level(j), lambda[j], start, flow.horizon, Orientation::Forward, opt);
      } catch (const DegenerateCrossing& e) {
        throw DegenerateCrossing(e.what(), j);
      }
      if (events.size() % 2 == 0) tree.consistent = false;
      for (const auto& ev : events) {
        CrossingTree::Node child{ev.point, j, id, tree.nodes[id].times, ev.margin};
        child.times[j - 1] = ev.t;
        tree.nodes.push_back(std::move(child));
        next.push_back(static_cast<int>(tree.nodes.size()) - 1);
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) {
      tree.consistent = false;
      break;
    }
  }
  if (!frontier.empty() && tree.nodes[frontier.front()].stage == p) tree.leaves = frontier;
  return tree;
}

/// Expands R_p^j(x) stage by stage with the backward flows p..1.
inline CrossingTree backward_tree(const RelaySystem& s, const Offsets& lambda, const Point& x,
                                  const CrossingOptions& opt = {}) {
  s.check_offsets(lambda);
  const int p = s.modes();
  if (std::abs(s.level(p).evaluate(x) - lambda[p]) > opt.tol_level) {
    throw std::invalid_argument("backward tree root must lie on the boundary of region p");
  }
  CrossingTree tree;
  tree.root = x;
  tree.forward = false;
  tree.nodes.push_back({x, p, -1, Eigen::VectorXd::Zero(p), 0.0});
  std::vector<int> frontier{0};
  for (int j = p; j >= 1; --j) {
    std::vector<int> next;
    const Flow& flow = s.flow(j);
    for (int id : frontier) {
      const Point start = tree.nodes[id].point;
      std::vector<CrossingEvent> events;
      try {
        events = find_crossings(flow, s.level(j - 1), lambda[j - 1], start, flow.horizon, Orientation::Backward, opt);
      } catch (const DegenerateCrossing& e) {
        throw DegenerateCrossing(e.what(), j);
      }
      for (const auto& ev : events) {
        CrossingTree::Node child{ev.point, j - 1, id, tree.nodes[id].times, ev.margin};
        child.times[j - 1] = ev.t;
        tree.nodes.push_back(std::move(child));
        next.push_back(static_cast<int>(tree.nodes.size()) - 1);
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  if (!frontier.empty() && tree.nodes[frontier.front()].stage == 0) tree.leaves = frontier;
  return tree;
}

inline int parity_nu0(const RelaySystem& s, const Offsets& lambda, const Point& x, const CrossingOptions& opt = {}) {
  return static_cast<int>(forward_tree(s, lambda, x, opt).leaf_count() % 2);
}

inline int parity_nu1(const RelaySystem& s, const Offsets& lambda, const Point& x, const CrossingOptions& opt = {}) {
  return static_cast<int>(backward_tree(s, lambda, x, opt).leaf_count() % 2);
}

// ---------------------------------------------------------------------------
// Degree survey over random boundary samples

struct DegreeSample {
  Point x;
  bool degenerate = false;
  int leaves = 0;
  int parity = 0;
};

struct DegreeSide {
  std::vector<DegreeSample> samples;

  int regular() const {
    return static_cast<int>(std::count_if(samples.begin(), samples.end(), [](const auto& d) { return !d.degenerate; }));
  }
  int degenerate() const { return static_cast<int>(samples.size()) - regular(); }
  double degenerate_rate() const { return samples.empty() ? 0.0 : double(degenerate()) / double(samples.size()); }
  int count_parity(int parity) const {
    return static_cast<int>(std::count_if(samples.begin(), samples.end(),
                                          [&](const auto& d) { return !d.degenerate && d.parity == parity; }));
  }
  /// Common parity of all regular samples, if they agree.
  std::optional<int> agreed_parity() const {
    if (regular() == 0) return std::nullopt;
    if (count_parity(0) == regular()) return 0;
    if (count_parity(1) == regular()) return 1;
    return std::nullopt;
  }
};

struct DegreeSurvey {
  DegreeSide nu0;
  DegreeSide nu1;
};

/// Leaf-count parities of the forward trees over samples of the boundary of
/// region 0 and of the backward trees over samples of the boundary of region p.
inline DegreeSurvey degree_survey(const RelaySystem& s, const Offsets& lambda, int samples, const SplitRng& rng,
                                  const CrossingOptions& opt = {}) {
  s.check_offsets(lambda);
  const int p = s.modes();
  DegreeSurvey out;
  const auto b0 = sample_boundary(s.level(0), lambda[0], s.eps_reg(0), s.box(), samples, rng.split("nu0"));
  const auto bp = sample_boundary(s.level(p), lambda[p], s.eps_reg(p), s.box(), samples, rng.split("nu1"));
  for (const auto& b : b0) {
    DegreeSample d{b.x};
    try {
      d.leaves = static_cast<int>(forward_tree(s, lambda, b.x, opt).leaf_count());
      d.parity = d.leaves % 2;
    } catch (const DegenerateCrossing&) {
      d.degenerate = true;
    }
    out.nu0.samples.push_back(std::move(d));
  }
  for (const auto& b : bp) {
    DegreeSample d{b.x};
    try {
      d.leaves = static_cast<int>(backward_tree(s, lambda, b.x, opt).leaf_count());
      d.parity = d.leaves % 2;
    } catch (const DegenerateCrossing&) {
      d.degenerate = true;
    }
    out.nu1.samples.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Winding number of a planar map restricted to the unit circle

/// Total winding of (g1, g2)/|(g1, g2)| as the unit circle is traversed once.
inline int winding_degree(const Expression& g1, const Expression& g2, int samples = 64) {
  if (g1.dimension() != 2 || g2.dimension() != 2) throw std::invalid_argument("winding map needs planar expressions");
  int m = std::max(samples, 64);
  for (;; m *= 2) {
    if (m > (1 << 20)) throw VanishingImage("winding increments did not resolve below pi/2");
    std::vector<double> angles(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      const double th = 2.0 * std::numbers::pi * k / m;
      Point u(2);
      u << std::cos(th), std::sin(th);
      const double a = g1.evaluate(u), b = g2.evaluate(u);
      if (std::hypot(a, b) < 1e-12) throw VanishingImage("map vanishes on the circle");
      angles[k] = std::atan2(b, a);
    }
    double total = 0.0;
    bool coarse = false;
    for (int k = 0; k < m; ++k) {
      double d = angles[(k + 1) % m] - angles[k];
      d = std::remainder(d, 2.0 * std::numbers::pi);
      if (std::abs(d) >= 0.5 * std::numbers::pi) coarse = true;
      total += d;
    }
    if (coarse) continue;
    return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
  }
}

}  // namespace relayflow
