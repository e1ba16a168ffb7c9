#pragma once

// Quasisolution semantics: in mode k the state follows flow F_k and watches
// only the boundary of region k; reaching it switches the mode to k+1 (mod p).
// Mode 0 runs flow F_p and switches on the boundary of region p (= region 0
// at offset lambda_p).

#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/events.hpp>
#include <relayflow/geometry.hpp>
#include <relayflow/random.hpp>
#include <relayflow/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

namespace relayflow {

/// Flow and level index (1..p) used while in mode k (0..p-1).
inline int mode_stage(const RelaySystem& s, int mode) { return mode == 0 ? s.modes() : mode; }

struct Segment {
  int mode = 0;
  double start_time = 0.0;
  double duration = 0.0;
  Point start;
  Point end;
};

struct SwitchEvent {
  double time = 0.0;
  Point point;
  int mode_before = 0;
  int mode_after = 0;
  int crossing_index = 0;  // 1-based position of the chosen crossing along its segment
  double margin = 0.0;
};

struct Quasisolution {
  int initial_mode = 0;
  std::vector<Segment> segments;
  std::vector<SwitchEvent> switches;

  double total_time() const { return segments.empty() ? 0.0 : segments.back().start_time + segments.back().duration; }
  Point final_state() const { return segments.back().end; }
};

struct FirstHit {};
struct NthHit {
  int n = 1;
};
struct RandomHit {
  std::uint64_t seed = 0;
};
struct Branching {
  int breadth = 64;
};
/// Crossing index per switch, cycling when the trajectory outlives the list.
struct HitSequence {
  std::vector<int> indices;
};

using SwitchPolicy = std::variant<FirstHit, NthHit, RandomHit, Branching, HitSequence>;

struct StopCriteria {
  int max_switches = 10;
  double t_max = std::numeric_limits<double>::infinity();
};

/// Runs one quasisolution from x0 in mode k0.
inline Quasisolution simulate(const RelaySystem& s, const Offsets& lambda, const Point& x0, int k0,
                              const SwitchPolicy& policy, const StopCriteria& stop = {},
                              const CrossingOptions& opt = {}) {
  s.check_offsets(lambda);
  const int p = s.modes();
  if (k0 < 0 || k0 >= p) throw std::invalid_argument("initial mode must lie in 0..p-1");
  if (x0.size() != s.dimension()) throw std::invalid_argument("initial point dimension mismatch");
  if (std::holds_alternative<Branching>(policy)) {
    throw std::invalid_argument("branching policy yields many trajectories; use accessible_set");
  }
  if (const auto* nth = std::get_if<NthHit>(&policy); nth && nth->n < 1) {
    throw std::invalid_argument("NthHit index must be at least 1");
  }
  std::optional<SplitRng> rng;
  if (const auto* r = std::get_if<RandomHit>(&policy)) rng.emplace(r->seed);

  Quasisolution q;
  q.initial_mode = k0;
  Point x = x0;
  int mode = k0;
  double t = 0.0;
  while (true) {
    const int stage = mode_stage(s, mode);
    const Flow& flow = s.flow(stage);
    const double remaining = stop.t_max - t;
    if (static_cast<int>(q.switches.size()) >= stop.max_switches || !(remaining > 0.0)) break;

    const double window = std::min(flow.time_cap(), remaining);
    const Trajectory traj = integrate_trajectory(flow, window, x);
    const std::vector<CrossingEvent> events = crossings_along(traj, flow, s.level(stage), lambda[stage], window, opt);

    std::size_t pick = 0;
    bool have = !events.empty();
    if (have) {
      if (const auto* nth = std::get_if<NthHit>(&policy)) {
        have = static_cast<std::size_t>(nth->n) <= events.size();
        pick = static_cast<std::size_t>(nth->n - 1);
      } else if (const auto* seq = std::get_if<HitSequence>(&policy)) {
        const int want = seq->indices.empty() ? 1 : seq->indices[q.switches.size() % seq->indices.size()];
        have = want >= 1 && static_cast<std::size_t>(want) <= events.size();
        pick = static_cast<std::size_t>(want - 1);
      } else if (rng) {
        pick = rng->index(events.size());
      }
    }
    if (!have) {
      if (remaining <= flow.time_cap()) {
        q.segments.push_back({mode, t, remaining, x, traj.final_state()});
        break;
      }
      throw NoCrossingWithinHorizon("no crossing of the mode-" + std::to_string(mode) +
                                    " switching surface within 10*T");
    }
    const CrossingEvent& ev = events[pick];
    q.segments.push_back({mode, t, ev.t, x, ev.point});
    const int next = (mode + 1) % p;
    q.switches.push_back({t + ev.t, ev.point, mode, next, static_cast<int>(pick) + 1, ev.margin});
    x = ev.point;
    t += ev.t;
    mode = next;
  }
  if (q.segments.empty()) q.segments.push_back({mode, t, 0.0, x, x});
  return q;
}

/// Largest discrepancy between stored segment ends and re-integrated ones.
inline double replay_error(const RelaySystem& s, const Quasisolution& q) {
  double worst = 0.0;
  for (const auto& seg : q.segments) {
    const Point y = flow_map(s.flow(mode_stage(s, seg.mode)), seg.duration, seg.start);
    worst = std::max(worst, (y - seg.end).norm());
  }
  return worst;
}

/// Post-hoc check of the stricter "solution" notion: while in mode k the
/// state never lies in the interior of region k. Reported, never enforced.
inline bool satisfies_solution_condition(const RelaySystem& s, const Offsets& lambda, const Quasisolution& q,
                                         int samples_per_segment = 64) {
  for (const auto& seg : q.segments) {
    if (seg.duration <= 0.0) continue;
    const int stage = mode_stage(s, seg.mode);
    const Trajectory traj = integrate_trajectory(s.flow(stage), seg.duration, seg.start);
    for (int j = 1; j < samples_per_segment; ++j) {
      const Point y = traj.at(seg.duration * j / samples_per_segment);
      if (s.level(stage).evaluate(y) - lambda[stage] > kTolLevel) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Accessible and limit sets

struct PointCloud {
  std::vector<Point> points;
  std::vector<int> level;  // switches completed before the point
  std::vector<int> mode;
  std::vector<std::pair<int, int>> edges;  // recorded trajectory adjacencies

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

struct BranchingOptions {
  int depth = 5;
  int breadth = 64;
  double resolution = 0.0;  // arc-length spacing; <= 0 selects box diameter / 512
  CrossingOptions crossing{};
};

namespace detail {

struct BranchNode {
  Point x;
  int mode = 0;
  std::vector<int> path;  // 0-based crossing indices from the root
  int attach = -1;        // cloud index of the parent's crossing point
};

// Appends samples of traj on [0, extent] at the given arc-length spacing,
// always including the requested times; returns the cloud index of each.
inline std::vector<int> sample_arc(const Trajectory& traj, double extent, const std::vector<double>& marks, double ds,
                                   int level, int mode, int attach, PointCloud& cloud) {
  std::vector<int> mark_index(marks.size(), -1);
  auto emit = [&](const Point& y) {
    cloud.points.push_back(y);
    cloud.level.push_back(level);
    cloud.mode.push_back(mode);
    return static_cast<int>(cloud.points.size()) - 1;
  };
  int last = emit(traj.initial());
  if (attach >= 0) cloud.edges.push_back({attach, last});
  double acc = 0.0;
  Point prev = traj.initial();
  std::size_t next_mark = 0;
  std::vector<std::size_t> order(marks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return marks[a] < marks[b]; });
  constexpr int kSub = 16;
  for (const auto& st : traj.steps()) {
    if (st.s0 >= extent) break;
    for (int j = 1; j <= kSub; ++j) {
      double s = j == kSub ? st.s0 + st.h : st.s0 + st.h * j / kSub;
      // marked times falling inside this sub-interval come first
      while (next_mark < order.size() && marks[order[next_mark]] <= std::min(s, extent)) {
        const Point y = traj.at(marks[order[next_mark]]);
        prev = y;
        const int id = emit(y);
        cloud.edges.push_back({last, id});
        last = id;
        acc = 0.0;
        mark_index[order[next_mark]] = id;
        ++next_mark;
      }
      if (s >= extent) break;
      const Point y = Trajectory::interpolate(st, s);
      acc += (y - prev).norm();
      prev = y;
      if (acc >= ds) {
        const int id = emit(y);
        cloud.edges.push_back({last, id});
        last = id;
        acc = 0.0;
      }
    }
  }
  return mark_index;
}

// Builds the breadth-capped branching tree; arcs of level L nodes carry level L.
inline PointCloud explore(const RelaySystem& s, const Offsets& lambda, const Point& x0, int k0,
                          const BranchingOptions& opt) {
  s.check_offsets(lambda);
  const int p = s.modes();
  if (k0 < 0 || k0 >= p) throw std::invalid_argument("initial mode must lie in 0..p-1");
  if (opt.depth < 0 || opt.breadth < 1) throw std::invalid_argument("depth must be >= 0 and breadth >= 1");
  const double ds = opt.resolution > 0.0 ? opt.resolution : s.box().diameter() / 512.0;

  PointCloud cloud;
  std::vector<BranchNode> frontier{{x0, k0, {}, -1}};
  for (int level = 0; level <= opt.depth && !frontier.empty(); ++level) {
    struct Expanded {
      Trajectory traj;
      std::vector<CrossingEvent> events;
    };
    std::vector<Expanded> expanded;
    expanded.reserve(frontier.size());
    for (const auto& node : frontier) {
      const int stage = mode_stage(s, node.mode);
      const Flow& flow = s.flow(stage);
      Trajectory traj = integrate_trajectory(flow, flow.time_cap(), node.x);
      auto events = crossings_along(traj, flow, s.level(stage), lambda[stage], flow.time_cap(), opt.crossing);
      if (events.empty() && level < opt.depth) {
        throw NoCrossingWithinHorizon("branch has no crossing of its switching surface within 10*T");
      }
      expanded.push_back({std::move(traj), std::move(events)});
    }

    // Candidate children in lexicographic order of crossing-index paths.
    struct Candidate {
      std::size_t parent;
      std::size_t crossing;
    };
    std::vector<Candidate> kept;
    if (level < opt.depth) {
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        for (std::size_t c = 0; c < expanded[i].events.size(); ++c) kept.push_back({i, c});
      }
      std::stable_sort(kept.begin(), kept.end(), [&](const Candidate& a, const Candidate& b) {
        auto pa = frontier[a.parent].path;
        auto pb = frontier[b.parent].path;
        pa.push_back(static_cast<int>(a.crossing));
        pb.push_back(static_cast<int>(b.crossing));
        return pa < pb;
      });
      if (kept.size() > static_cast<std::size_t>(opt.breadth)) kept.resize(static_cast<std::size_t>(opt.breadth));
      std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
        return a.parent != b.parent ? a.parent < b.parent : a.crossing < b.crossing;
      });
    }

    std::vector<BranchNode> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto& ex = expanded[i];
      double extent = ex.events.empty() ? ex.traj.span() : ex.events.front().t;
      std::vector<double> marks;
      std::vector<std::size_t> which;
      for (const auto& c : kept) {
        if (c.parent != i) continue;
        marks.push_back(ex.events[c.crossing].t);
        which.push_back(c.crossing);
        extent = std::max(extent, ex.events[c.crossing].t);
      }
      if (marks.empty() || marks.back() < extent) marks.push_back(extent);
      const auto ids = sample_arc(ex.traj, extent, marks, ds, level, frontier[i].mode, frontier[i].attach, cloud);
      for (std::size_t m = 0; m < which.size(); ++m) {
        BranchNode child;
        child.x = ex.events[which[m]].point;
        child.mode = (frontier[i].mode + 1) % p;
        child.path = frontier[i].path;
        child.path.push_back(static_cast<int>(which[m]));
        child.attach = ids[m];
        next.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
  return cloud;
}

inline PointCloud filter_levels(const PointCloud& in, int min_level) {
  PointCloud out;
  std::vector<int> remap(in.size(), -1);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in.level[i] < min_level) continue;
    remap[i] = static_cast<int>(out.points.size());
    out.points.push_back(in.points[i]);
    out.level.push_back(in.level[i]);
    out.mode.push_back(in.mode[i]);
  }
  for (const auto& [a, b] : in.edges) {
    if (remap[a] >= 0 && remap[b] >= 0) out.edges.push_back({remap[a], remap[b]});
  }
  return out;
}

}  // namespace detail

/// Union of branching trajectory arcs up to `depth` switches, sampled every
/// `resolution` of arc length, with recorded segment adjacencies.
inline PointCloud accessible_set(const RelaySystem& s, const Offsets& lambda, const Point& x0, int k0,
                                 const BranchingOptions& opt = {}) {
  return detail::explore(s, lambda, x0, k0, opt);
}

/// The part of the branching tree reached after at least `m_discard`
/// switches; `opt.depth` bounds the total switch count from x0, so the
/// estimates for increasing m_discard are nested.
inline PointCloud omega_limit_estimate(const RelaySystem& s, const Offsets& lambda, const Point& x0, int k0,
                                       int m_discard, const BranchingOptions& opt = {}) {
  if (m_discard < 0 || m_discard > opt.depth) throw std::invalid_argument("m_discard must lie in 0..depth");
  return detail::filter_levels(detail::explore(s, lambda, x0, k0, opt), m_discard);
}

struct Connectivity {
  bool connected = false;
  int components = 0;
};

/// Components of the graph joining points within distance delta plus the
/// recorded adjacencies.
inline Connectivity check_connected(const PointCloud& cloud, double delta) {
  if (cloud.empty()) throw std::invalid_argument("point cloud is empty");
  const std::size_t N = cloud.size();
  std::vector<int> parent(N);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  for (const auto& [a, b] : cloud.edges) unite(a, b);

  const int n = static_cast<int>(cloud.points.front().size());
  std::map<std::vector<long>, std::vector<int>> grid;
  auto cell_of = [&](const Point& x) {
    std::vector<long> c(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) c[i] = static_cast<long>(std::floor(x[i] / delta));
    return c;
  };
  for (std::size_t i = 0; i < N; ++i) grid[cell_of(cloud.points[i])].push_back(static_cast<int>(i));

  std::vector<long> offset(static_cast<std::size_t>(n));
  for (const auto& [cell, members] : grid) {
    // visit the 3^n neighbouring cells
    std::fill(offset.begin(), offset.end(), -1);
    while (true) {
      std::vector<long> nb = cell;
      for (int i = 0; i < n; ++i) nb[i] += offset[i];
      if (auto it = grid.find(nb); it != grid.end()) {
        for (int a : members) {
          for (int b : it->second) {
            if (b > a && (cloud.points[a] - cloud.points[b]).norm() <= delta) unite(a, b);
          }
        }
      }
      int i = 0;
      while (i < n && offset[i] == 1) offset[i++] = -1;
      if (i == n) break;
      ++offset[i];
    }
  }
  int components = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (find(static_cast<int>(i)) == static_cast<int>(i)) ++components;
  }
  return {components == 1, components};
}

}  // namespace relayflow
