#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace relayflow {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Offsets (lambda_0, ..., lambda_p) of the switching levels. Entries 0 and p
/// both apply to the level function of region 0.
using Offsets = Eigen::VectorXd;

/// Axis-aligned sampling box.
struct Box {
  Point lower;
  Point upper;

  int dimension() const { return static_cast<int>(lower.size()); }
  bool contains(const Point& x, double slack = 0.0) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
    }
    return true;
  }
  double diameter() const { return (upper - lower).norm(); }
};

inline Box make_box(const Point& lower, const Point& upper) {
  if (lower.size() != upper.size()) throw std::invalid_argument("box bounds differ in dimension");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) throw std::invalid_argument("box lower bound must be below upper bound");
  }
  return Box{lower, upper};
}

}  // namespace relayflow
