#include <relayflow/expr.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace relayflow;

namespace {

Point point3(double a, double b, double c) { return (Point(3) << a, b, c).finished(); }

}  // namespace

TEST(Expr, EvaluatesPrecedenceAndAssociativity) {
  const Point x = point3(2.0, 3.0, 0.5);
  EXPECT_DOUBLE_EQ(parse("1 + 2*3", 3).evaluate(x), 7.0);
  EXPECT_DOUBLE_EQ(parse("2^3^2", 3).evaluate(x), 512.0);
  EXPECT_DOUBLE_EQ(parse("-x1^2", 3).evaluate(x), -4.0);
  EXPECT_DOUBLE_EQ(parse("8 / 4 / 2", 3).evaluate(x), 1.0);
  EXPECT_DOUBLE_EQ(parse("x1 - x2 - x3", 3).evaluate(x), -1.5);
  EXPECT_DOUBLE_EQ(parse("1.5e1 + 2E-1", 3).evaluate(x), 15.2);
  EXPECT_NEAR(parse("sin(x3) + cos(x3) + exp(x3) + sqrt(x1) + tanh(x2)", 3).evaluate(x),
              std::sin(0.5) + std::cos(0.5) + std::exp(0.5) + std::sqrt(2.0) + std::tanh(3.0), 1e-15);
}

TEST(Expr, IntegerPowersOfNegativeBases) {
  EXPECT_DOUBLE_EQ(parse("x1^3", 2).evaluate((Point(2) << -2.0, 0.0).finished()), -8.0);
  EXPECT_DOUBLE_EQ(parse("(x1 - 1)^2", 2).evaluate((Point(2) << -1.0, 0.0).finished()), 4.0);
  EXPECT_THROW(parse("x1^0.5", 2).evaluate((Point(2) << -1.0, 0.0).finished()), EvalError);
  EXPECT_THROW(parse("x1^(-1)", 2).evaluate((Point(2) << 0.0, 0.0).finished()), EvalError);
}

TEST(Expr, EvalErrors) {
  const Point z = Point::Zero(2);
  EXPECT_THROW(parse("1 / x1", 2).evaluate(z), EvalError);
  EXPECT_THROW(parse("sqrt(x1 - 1)", 2).evaluate(z), EvalError);
  EXPECT_THROW(parse("exp(1000)", 2).evaluate(z), EvalError);
}

TEST(Expr, SyntaxErrorsCarryPosition) {
  try {
    parse("x1 + * x2", 2);
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.position(), 5u);
  }
  EXPECT_THROW(parse("", 2), SyntaxError);
  EXPECT_THROW(parse("(x1 + x2", 2), SyntaxError);
  EXPECT_THROW(parse("x1 x2", 2), SyntaxError);
  EXPECT_THROW(parse("foo(x1)", 2), SyntaxError);
  EXPECT_THROW(parse("x0", 2), UnknownVariable);
  EXPECT_THROW(parse("x3", 2), UnknownVariable);
}

TEST(Expr, PrintParseRoundTrip) {
  const std::vector<std::string> corpus = {
      "0.09 - ((x1 - 1)^2 + x2^2)", "-x1 * sin(x2)", "x1 / (1 + x2^2)", "exp(-x1) - tanh(x2 * 3)",
      "2^x1", "-(-3)", "1e-3 * x1", "sqrt(x1^2 + x2^2 + 1)"};
  for (const auto& text : corpus) {
    const Expression e = parse(text, 2);
    const Expression back = parse(e.to_string(), 2);
    EXPECT_TRUE(e.structurally_equal(back)) << text << " -> " << e.to_string();
    EXPECT_EQ(back.to_string(), e.to_string());
  }
}

TEST(Expr, BuildersMatchParser) {
  const Expression x1 = Expression::variable(1, 2), x2 = Expression::variable(2, 2);
  const Expression built = Expression::constant(0.25, 2) - x1 * x1 - x2 / Expression::constant(2.0, 2);
  const Expression parsed = parse("0.25 - x1*x1 - x2/2", 2);
  EXPECT_TRUE(built.structurally_equal(parsed));
}

// Central differences as an independent oracle for the dual-number gradients.
TEST(Expr, GradientMatchesFiniteDifferences) {
  const std::vector<std::string> corpus = {
      "x1 + x2 + x3",
      "x1 * x2 * x3",
      "x1^2 + x2^3 - x3^4",
      "sin(x1) * cos(x2)",
      "exp(x1 - x2) + x3",
      "sqrt(x1^2 + x2^2 + x3^2)",
      "tanh(x1 * x2) - x3",
      "x1 / (1 + x2^2)",
      "-x1 * sin(x2 * x3)",
      "0.09 - ((x1 - 1)^2 + x2^2)",
      "0.25 - ((x1 + 1)^2 + x2^2)",
      "x1^x2",
      "2^x3 * x1",
      "exp(-x1^2 - x2^2) * cos(x3)",
      "(x1 - x2) / (x3 + 3)",
      "sin(cos(x1)) + cos(sin(x2))",
      "x1^0.5 * x2",
      "tanh(x1) / sqrt(1 + x3^2)",
      "-0.5*(x1 + 1) - x2",
      "(x1 - 1)^2 * (x2 + 1)^3 - x3",
  };
  ASSERT_EQ(corpus.size(), 20u);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.3, 1.7);
  for (const auto& text : corpus) {
    const Expression e = parse(text, 3);
    for (int trial = 0; trial < 5; ++trial) {
      const Point x = point3(u(gen), u(gen), u(gen));
      const Point g = e.gradient(x);
      for (int i = 0; i < 3; ++i) {
        const double h = 1e-5;
        Point xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (e.evaluate(xp) - e.evaluate(xm)) / (2 * h);
        EXPECT_LT(std::abs(fd - g[i]), 1e-6 * std::max(1.0, std::abs(g[i]))) << text << " d/dx" << i + 1;
      }
    }
  }
}

TEST(Expr, GradientOfConstantIsZero) {
  const Point g = parse("3 + 4", 2).gradient(Point::Ones(2));
  EXPECT_EQ(g, Point::Zero(2));
}

TEST(Expr, DimensionMismatchRejected) {
  EXPECT_THROW(parse("x1", 2).evaluate(Point::Zero(3)), std::invalid_argument);
}
