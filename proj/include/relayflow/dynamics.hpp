#pragma once

// Autonomous flows x' = V(x): adaptive Dormand-Prince 5(4) integration with
// the free fourth-order continuous extension, and the variational equation
// M' = DV(x) M for space derivatives of the flow map.

#include <relayflow/errors.hpp>
#include <relayflow/expr.hpp>
#include <relayflow/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace relayflow {

struct IntegratorSettings {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  bool dense = true;
  long max_steps = 2'000'000;
};

class VectorField {
 public:
  VectorField() = default;
  VectorField(std::vector<Expression> components, int label = 0)
      : components_(std::move(components)), label_(label) {
    if (components_.empty()) throw std::invalid_argument("vector field needs at least one component");
    const int n = dimension();
    for (const auto& c : components_) {
      if (c.dimension() != n) throw std::invalid_argument("vector field component dimension mismatch");
    }
  }

  int dimension() const noexcept { return static_cast<int>(components_.size()); }
  int label() const noexcept { return label_; }
  const std::vector<Expression>& components() const noexcept { return components_; }

  Point operator()(const Point& x) const {
    Point v(dimension());
    for (int i = 0; i < dimension(); ++i) v[i] = components_[i].evaluate(x);
    return v;
  }

  /// Row i is the gradient of component i.
  Matrix jacobian(const Point& x) const {
    const int n = dimension();
    Matrix J(n, n);
    for (int i = 0; i < n; ++i) J.row(i) = components_[i].gradient(x).transpose();
    return J;
  }

 private:
  std::vector<Expression> components_;
  int label_ = 0;
};

struct Flow {
  VectorField field;
  double horizon = 1.0;  // T_k
  IntegratorSettings settings{};

  Flow() = default;
  Flow(VectorField f, double T, IntegratorSettings s = {}) : field(std::move(f)), horizon(T), settings(s) {
    if (!(horizon > 0.0)) throw std::invalid_argument("flow horizon must be positive");
    if (!(settings.rtol > 0.0) || !(settings.atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  }

  int dimension() const noexcept { return field.dimension(); }
  double time_cap() const noexcept { return 10.0 * horizon; }
};

/// Dense record of one integration. Time runs from 0 to `end()`; `end()` is
/// negative for backward integrations.
class Trajectory {
 public:
  struct Step {
    double s0 = 0.0;  // elapsed time at step start
    double h = 0.0;
    Eigen::VectorXd y0, y1;
    Eigen::VectorXd r2, r3, r4, r5;  // continuous-extension coefficients
  };

  Trajectory() = default;
  Trajectory(double sign, int state_dim) : sign_(sign), state_dim_(state_dim) {}

  double sign() const noexcept { return sign_; }
  double end() const noexcept { return sign_ * span(); }
  double span() const noexcept { return steps_.empty() ? 0.0 : steps_.back().s0 + steps_.back().h; }
  const std::vector<Step>& steps() const noexcept { return steps_; }
  const Eigen::VectorXd& initial() const noexcept { return initial_; }
  const Eigen::VectorXd& final_state() const noexcept { return steps_.empty() ? initial_ : steps_.back().y1; }
  int state_dimension() const noexcept { return state_dim_; }

  /// State at signed time t; stored step endpoints are returned exactly.
  Eigen::VectorXd at(double t) const {
    double s = t * sign_;
    if (t == 0.0) s = 0.0;
    if (!(s >= 0.0) || s > span()) throw OutOfSpan("time " + std::to_string(t) + " outside integrated span");
    if (s == 0.0 || steps_.empty()) return initial_;
    auto it = std::lower_bound(steps_.begin(), steps_.end(), s,
                               [](const Step& st, double v) { return st.s0 + st.h < v; });
    if (it == steps_.end()) it = std::prev(steps_.end());
    return interpolate(*it, s);
  }

  static Eigen::VectorXd interpolate(const Step& st, double s) {
    if (s == st.s0) return st.y0;
    if (s == st.s0 + st.h) return st.y1;
    const double th = (s - st.s0) / st.h;
    const double th1 = 1.0 - th;
    return st.y0 + th * (st.r2 + th1 * (st.r3 + th * (st.r4 + th1 * st.r5)));
  }

  void set_initial(Eigen::VectorXd y) { initial_ = std::move(y); }
  void push(Step st) { steps_.push_back(std::move(st)); }

 private:
  double sign_ = 1.0;
  int state_dim_ = 0;
  Eigen::VectorXd initial_;
  std::vector<Step> steps_;
};

namespace detail {

// Dormand-Prince 5(4) tableau with the dense-output weights of Hairer's DOPRI5.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

inline double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                         double rtol, double atol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = err[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

/// Integrates y' = rhs(y) over elapsed time [0, duration].
template <typename Rhs>
Trajectory integrate(const Rhs& rhs, const Eigen::VectorXd& y0, double duration, double sign,
                     const IntegratorSettings& opt) {
  using DP = DormandPrince;
  Trajectory traj(sign, static_cast<int>(y0.size()));
  traj.set_initial(y0);
  if (duration == 0.0) return traj;

  auto eval = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    Eigen::VectorXd dy;
    try {
      dy = rhs(y);
    } catch (const EvalError& e) {
      throw IntegrationError(std::string("vector field evaluation failed: ") + e.what());
    }
    if (!dy.allFinite()) throw IntegrationError("non-finite vector field value");
    return dy;
  };

  Eigen::VectorXd y = y0;
  Eigen::VectorXd k1 = eval(y);
  double s = 0.0;

  // Initial step guess from the local scale of the solution.
  double h;
  {
    Eigen::VectorXd sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
    const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min({h, duration, opt.max_step});
  }

  long nsteps = 0;
  bool last_rejected = false;
  while (s < duration) {
    if (++nsteps > opt.max_steps) throw IntegrationError("maximum number of steps exceeded");
    bool final_step = false;
    if (s + 1.01 * h >= duration) {
      h = duration - s;
      final_step = true;
    }
    if (h < 1e-14 * std::max(1.0, s)) throw IntegrationError("step size underflow");

    const Eigen::VectorXd k2 = eval(y + h * (DP::a21 * k1));
    const Eigen::VectorXd k3 = eval(y + h * (DP::a31 * k1 + DP::a32 * k2));
    const Eigen::VectorXd k4 = eval(y + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3));
    const Eigen::VectorXd k5 = eval(y + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4));
    const Eigen::VectorXd k6 =
        eval(y + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5));
    const Eigen::VectorXd ynew = y + h * (DP::a71 * k1 + DP::a73 * k3 + DP::a74 * k4 + DP::a75 * k5 + DP::a76 * k6);
    const Eigen::VectorXd k7 = eval(ynew);
    const Eigen::VectorXd err =
        h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);
    const double en = error_norm(err, y, ynew, opt.rtol, opt.atol);
    if (!std::isfinite(en)) throw IntegrationError("non-finite state");

    if (en <= 1.0) {
      Trajectory::Step st;
      st.s0 = s;
      st.h = h;
      st.y0 = y;
      st.y1 = ynew;
      if (opt.dense) {
        const Eigen::VectorXd ydiff = ynew - y;
        const Eigen::VectorXd bspl = h * k1 - ydiff;
        st.r2 = ydiff;
        st.r3 = bspl;
        st.r4 = ydiff - h * k7 - bspl;
        st.r5 = h * (DP::d1 * k1 + DP::d3 * k3 + DP::d4 * k4 + DP::d5 * k5 + DP::d6 * k6 + DP::d7 * k7);
      }
      traj.push(std::move(st));
      s = final_step ? duration : s + h;
      y = ynew;
      k1 = k7;
      double fac = en == 0.0 ? 5.0 : 0.9 * std::pow(en, -0.2);
      fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
      h = std::min(h * fac, opt.max_step);
      last_rejected = false;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      last_rejected = true;
    }
  }
  return traj;
}

inline void check_flow_time(const Flow& f, double t) {
  if (!std::isfinite(t) || std::abs(t) > f.time_cap()) {
    throw IntegrationError("requested time " + std::to_string(t) + " exceeds the cap 10*T");
  }
}

}  // namespace detail

/// Integrates the flow for signed time t from x; backward times integrate -V forward.
inline Trajectory integrate_trajectory(const Flow& f, double t, const Point& x) {
  detail::check_flow_time(f, t);
  if (x.size() != f.dimension()) throw std::invalid_argument("point dimension does not match flow");
  const double sign = t < 0.0 ? -1.0 : 1.0;
  auto rhs = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return sign * f.field(y); };
  return detail::integrate(rhs, x, std::abs(t), sign, f.settings);
}

inline Point flow_map(const Flow& f, double t, const Point& x) {
  if (t == 0.0) {
    if (x.size() != f.dimension()) throw std::invalid_argument("point dimension does not match flow");
    return x;
  }
  IntegratorSettings s = f.settings;
  s.dense = false;
  Flow plain = f;
  plain.settings = s;
  return integrate_trajectory(plain, t, x).final_state();
}

struct FlowDerivative {
  Point state;
  Matrix jacobian;
};

/// Flow map and its space derivative from the variational equation.
inline FlowDerivative flow_with_jacobian(const Flow& f, double t, const Point& x) {
  detail::check_flow_time(f, t);
  const int n = f.dimension();
  if (x.size() != n) throw std::invalid_argument("point dimension does not match flow");
  if (t == 0.0) return {x, Matrix::Identity(n, n)};
  const double sign = t < 0.0 ? -1.0 : 1.0;
  Eigen::VectorXd y0(n + n * n);
  y0.head(n) = x;
  y0.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(Matrix::Identity(n, n).eval().data(), n * n);
  auto rhs = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    Eigen::VectorXd dy(n + n * n);
    const Point xs = y.head(n);
    dy.head(n) = sign * f.field(xs);
    const Eigen::Map<const Matrix> M(y.data() + n, n, n);
    const Matrix dM = sign * (f.field.jacobian(xs) * M);
    dy.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(dM.data(), n * n);
    return dy;
  };
  IntegratorSettings s = f.settings;
  s.dense = false;
  const Trajectory traj = detail::integrate(rhs, y0, std::abs(t), sign, s);
  const Eigen::VectorXd& yf = traj.final_state();
  return {yf.head(n), Eigen::Map<const Matrix>(yf.data() + n, n, n)};
}

inline Matrix flow_jacobian(const Flow& f, double t, const Point& x) { return flow_with_jacobian(f, t, x).jacobian; }

/// Interpolated state of a recorded trajectory.
inline Point dense_eval(const Trajectory& traj, double t) { return traj.at(t); }

}  // namespace relayflow
