#pragma once

#include <relayflow/relayflow.hpp>

#include <cmath>
#include <numbers>

namespace testsys {

using namespace relayflow;

inline Box square(double h) { return {Point::Constant(2, -h), Point::Constant(2, h)}; }

// Rigid rotation between two off-centre disks.
inline RelaySystem rotor(double horizon = std::numbers::pi) {
  const VectorField rot({parse("-x2", 2), parse("x1", 2)}, 1);
  return RelaySystem(2, {Flow(rot, horizon), Flow(rot, horizon)},
                     {Region{parse("0.09 - ((x1 - 1)^2 + x2^2)", 2)}, Region{parse("0.16 - ((x1 + 1)^2 + x2^2)", 2)}},
                     square(3.0), 0.0);
}

// Spiral sinks at c1 = (-1, 0) and c0 = (1, 0).
inline RelaySystem system_b() {
  const VectorField v1({parse("-0.5*(x1 + 1) - x2", 2), parse("(x1 + 1) - 0.5*x2", 2)}, 1);
  const VectorField v2({parse("-0.5*(x1 - 1) - x2", 2), parse("(x1 - 1) - 0.5*x2", 2)}, 2);
  return RelaySystem(2, {Flow(v1, 4.0), Flow(v2, 4.0)},
                     {Region{parse("0.25 - ((x1 - 1)^2 + x2^2)", 2)}, Region{parse("0.25 - ((x1 + 1)^2 + x2^2)", 2)}},
                     square(4.0), 0.0);
}

inline Point pt(double a, double b) { return (Point(2) << a, b).finished(); }

}  // namespace testsys
