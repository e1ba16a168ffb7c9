#pragma once

// Scalar expressions over x1..xn: parsing, printing, evaluation and exact
// first derivatives by forward-mode dual numbers.
//
// Grammar (whitespace-insensitive):
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := ("-")? power
//   power  := atom ("^" factor)?
//   atom   := number | var | func "(" expr ")" | "(" expr ")"
//   var    := "x" digit+
//   func   := "sin" | "cos" | "exp" | "sqrt" | "tanh"

#include <relayflow/errors.hpp>
#include <relayflow/types.hpp>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace relayflow {

enum class Op { Const, Var, Neg, Sin, Cos, Exp, Sqrt, Tanh, Add, Sub, Mul, Div, Pow };

inline constexpr bool is_unary(Op op) { return op >= Op::Neg && op <= Op::Tanh; }
inline constexpr bool is_binary(Op op) { return op >= Op::Add; }

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int var = 0;         // Var, 1-based
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
  bool constant = true;  // subtree free of variables
};

namespace detail {

/// First-order dual number: value and one directional derivative.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

inline double primal(double x) { return x; }
inline double primal(const Dual& x) { return x.v; }

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw EvalError(std::string("non-finite result in ") + what);
}
inline void check_finite(const Dual& v, const char* what) {
  check_finite(v.v, what);
  check_finite(v.d, what);
}

inline double make_const(double c, double) { return c; }
inline Dual make_const(double c, const Dual&) { return {c, 0.0}; }

inline double op_neg(double a) { return -a; }
inline Dual op_neg(const Dual& a) { return {-a.v, -a.d}; }
inline double op_add(double a, double b) { return a + b; }
inline Dual op_add(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
inline double op_sub(double a, double b) { return a - b; }
inline Dual op_sub(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
inline double op_mul(double a, double b) { return a * b; }
inline Dual op_mul(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }

inline double op_div(double a, double b) {
  if (b == 0.0) throw EvalError("division by zero");
  return a / b;
}
inline Dual op_div(const Dual& a, const Dual& b) {
  if (b.v == 0.0) throw EvalError("division by zero");
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

inline double op_sin(double a) { return std::sin(a); }
inline Dual op_sin(const Dual& a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
inline double op_cos(double a) { return std::cos(a); }
inline Dual op_cos(const Dual& a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }
inline double op_exp(double a) { return std::exp(a); }
inline Dual op_exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline double op_sqrt(double a) {
  if (a < 0.0) throw EvalError("sqrt of negative value");
  return std::sqrt(a);
}
inline Dual op_sqrt(const Dual& a) {
  if (a.v < 0.0) throw EvalError("sqrt of negative value");
  const double s = std::sqrt(a.v);
  if (s == 0.0) {
    if (a.d != 0.0) throw EvalError("sqrt not differentiable at 0");
    return {0.0, 0.0};
  }
  return {s, 0.5 * a.d / s};
}
inline double op_tanh(double a) { return std::tanh(a); }
inline Dual op_tanh(const Dual& a) {
  const double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}

inline bool is_integer(double k) { return std::isfinite(k) && std::floor(k) == k; }

// Exponent held fixed (its subtree has no variables).
inline double op_pow_const(double b, double k) {
  if (is_integer(k)) {
    if (b == 0.0 && k < 0.0) throw EvalError("zero raised to a negative power");
    return std::pow(b, k);
  }
  if (!(b > 0.0)) throw EvalError("non-integer power of a non-positive base");
  return std::pow(b, k);
}
inline Dual op_pow_const(const Dual& b, double k) {
  const double v = op_pow_const(b.v, k);
  if (k == 0.0) return {v, 0.0};
  if (b.v == 0.0 && k < 1.0) {
    if (b.d != 0.0) throw EvalError("power not differentiable at 0");
    return {v, 0.0};
  }
  return {v, k * op_pow_const(b.v, k - 1.0) * b.d};
}

inline double op_pow_var(double b, double e) {
  if (!(b > 0.0)) throw EvalError("variable power of a non-positive base");
  return std::pow(b, e);
}
inline Dual op_pow_var(const Dual& b, const Dual& e) {
  const double v = op_pow_var(b.v, e.v);
  return {v, v * (e.d * std::log(b.v) + e.v * b.d / b.v)};
}

}  // namespace detail

/// Immutable expression over variables x1..xn.
class Expression {
 public:
  using NodePtr = std::shared_ptr<const ExprNode>;

  Expression() = default;
  Expression(NodePtr root, int dimension) : root_(std::move(root)), dimension_(dimension) {}

  static Expression constant(double c, int dimension) {
    auto node = std::make_shared<ExprNode>();
    node->op = Op::Const;
    node->value = c;
    return Expression(std::move(node), dimension);
  }

  static Expression variable(int index, int dimension) {
    if (index < 1 || index > dimension) throw UnknownVariable(0, index, dimension);
    auto node = std::make_shared<ExprNode>();
    node->op = Op::Var;
    node->var = index;
    node->constant = false;
    return Expression(std::move(node), dimension);
  }

  static Expression unary(Op op, const Expression& a) {
    if (!is_unary(op)) throw std::invalid_argument("not a unary operator");
    auto node = std::make_shared<ExprNode>();
    node->op = op;
    node->lhs = a.root_;
    node->constant = a.root_->constant;
    return Expression(std::move(node), a.dimension_);
  }

  static Expression binary(Op op, const Expression& a, const Expression& b) {
    if (!is_binary(op)) throw std::invalid_argument("not a binary operator");
    if (a.dimension_ != b.dimension_) throw std::invalid_argument("operand dimensions differ");
    auto node = std::make_shared<ExprNode>();
    node->op = op;
    node->lhs = a.root_;
    node->rhs = b.root_;
    node->constant = a.root_->constant && b.root_->constant;
    return Expression(std::move(node), a.dimension_);
  }

  int dimension() const noexcept { return dimension_; }
  const ExprNode& root() const { return *root_; }
  bool valid() const noexcept { return root_ != nullptr; }

  double evaluate(const Point& x) const {
    check_dimension(x);
    const double v = eval(*root_, x, -1, 0.0);
    detail::check_finite(v, "expression");
    return v;
  }

  /// Exact gradient, one forward-mode pass per partial.
  Point gradient(const Point& x) const {
    check_dimension(x);
    Point g(dimension_);
    for (int i = 0; i < dimension_; ++i) {
      const detail::Dual r = eval(*root_, x, i, detail::Dual{});
      detail::check_finite(r, "gradient");
      g[i] = r.d;
    }
    return g;
  }

  /// Canonical, fully parenthesized text; parse(to_string()) rebuilds the same tree.
  std::string to_string() const {
    std::string out;
    print(*root_, out);
    return out;
  }

  bool structurally_equal(const Expression& other) const {
    return dimension_ == other.dimension_ && equal(*root_, *other.root_);
  }

 private:
  void check_dimension(const Point& x) const {
    if (x.size() != dimension_) throw std::invalid_argument("point dimension does not match expression");
  }

  template <typename T>
  static T eval(const ExprNode& node, const Point& x, int seed, T tag) {
    using namespace detail;
    switch (node.op) {
      case Op::Const:
        return make_const(node.value, tag);
      case Op::Var:
        if constexpr (std::is_same_v<T, double>) {
          return x[node.var - 1];
        } else {
          return Dual{x[node.var - 1], node.var - 1 == seed ? 1.0 : 0.0};
        }
      case Op::Neg:
        return op_neg(eval(*node.lhs, x, seed, tag));
      case Op::Sin:
        return op_sin(eval(*node.lhs, x, seed, tag));
      case Op::Cos:
        return op_cos(eval(*node.lhs, x, seed, tag));
      case Op::Exp: {
        T r = op_exp(eval(*node.lhs, x, seed, tag));
        check_finite(r, "exp");
        return r;
      }
      case Op::Sqrt:
        return op_sqrt(eval(*node.lhs, x, seed, tag));
      case Op::Tanh:
        return op_tanh(eval(*node.lhs, x, seed, tag));
      case Op::Add:
        return op_add(eval(*node.lhs, x, seed, tag), eval(*node.rhs, x, seed, tag));
      case Op::Sub:
        return op_sub(eval(*node.lhs, x, seed, tag), eval(*node.rhs, x, seed, tag));
      case Op::Mul:
        return op_mul(eval(*node.lhs, x, seed, tag), eval(*node.rhs, x, seed, tag));
      case Op::Div:
        return op_div(eval(*node.lhs, x, seed, tag), eval(*node.rhs, x, seed, tag));
      case Op::Pow: {
        const T base = eval(*node.lhs, x, seed, tag);
        T r;
        if (node.rhs->constant) {
          r = op_pow_const(base, eval(*node.rhs, x, -1, 0.0));
        } else {
          r = op_pow_var(base, eval(*node.rhs, x, seed, tag));
        }
        check_finite(r, "power");
        return r;
      }
    }
    throw std::logic_error("unreachable expression operator");
  }

  static void print(const ExprNode& node, std::string& out) {
    switch (node.op) {
      case Op::Const: {
        std::array<char, 64> buf{};
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), std::abs(node.value));
        const std::string digits(buf.data(), end);
        if (std::signbit(node.value)) {
          out += "(-" + digits + ")";
        } else {
          out += digits;
        }
        return;
      }
      case Op::Var:
        out += "x" + std::to_string(node.var);
        return;
      case Op::Neg:
        out += "(-";
        print(*node.lhs, out);
        out += ")";
        return;
      case Op::Sin:
      case Op::Cos:
      case Op::Exp:
      case Op::Sqrt:
      case Op::Tanh:
        out += function_name(node.op);
        out += "(";
        print(*node.lhs, out);
        out += ")";
        return;
      default:
        out += "(";
        print(*node.lhs, out);
        out += " ";
        out += binary_symbol(node.op);
        out += " ";
        print(*node.rhs, out);
        out += ")";
        return;
    }
  }

  static bool equal(const ExprNode& a, const ExprNode& b) {
    if (a.op != b.op) return false;
    if (a.op == Op::Const) return std::memcmp(&a.value, &b.value, sizeof(double)) == 0;
    if (a.op == Op::Var) return a.var == b.var;
    if (!equal(*a.lhs, *b.lhs)) return false;
    return !is_binary(a.op) || equal(*a.rhs, *b.rhs);
  }

 public:
  static const char* function_name(Op op) {
    switch (op) {
      case Op::Sin: return "sin";
      case Op::Cos: return "cos";
      case Op::Exp: return "exp";
      case Op::Sqrt: return "sqrt";
      case Op::Tanh: return "tanh";
      default: return "";
    }
  }
  static char binary_symbol(Op op) {
    switch (op) {
      case Op::Add: return '+';
      case Op::Sub: return '-';
      case Op::Mul: return '*';
      case Op::Div: return '/';
      case Op::Pow: return '^';
      default: return '?';
    }
  }

 private:
  NodePtr root_;
  int dimension_ = 0;
};

inline Expression operator+(const Expression& a, const Expression& b) { return Expression::binary(Op::Add, a, b); }
inline Expression operator-(const Expression& a, const Expression& b) { return Expression::binary(Op::Sub, a, b); }
inline Expression operator*(const Expression& a, const Expression& b) { return Expression::binary(Op::Mul, a, b); }
inline Expression operator/(const Expression& a, const Expression& b) { return Expression::binary(Op::Div, a, b); }
inline Expression operator-(const Expression& a) { return Expression::unary(Op::Neg, a); }

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, int dimension) : text_(text), dimension_(dimension) {}

  Expression run() {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "expected expression, found end of input");
    Expression e = expr();
    skip_space();
    if (pos_ < text_.size()) throw SyntaxError(pos_, std::string("unexpected '") + text_[pos_] + "'");
    return e;
  }

 private:
  Expression expr() {
    Expression lhs = term();
    for (;;) {
      skip_space();
      if (accept('+')) {
        lhs = lhs + term();
      } else if (accept('-')) {
        lhs = lhs - term();
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = factor();
    for (;;) {
      skip_space();
      if (accept('*')) {
        lhs = lhs * factor();
      } else if (accept('/')) {
        lhs = lhs / factor();
      } else {
        return lhs;
      }
    }
  }

  Expression factor() {
    skip_space();
    if (accept('-')) return -power();
    return power();
  }

  Expression power() {
    Expression base = atom();
    skip_space();
    if (accept('^')) return Expression::binary(Op::Pow, base, factor());
    return base;
  }

  Expression atom() {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "expected operand, found end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expression inner = expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == 'x' && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      return variable();
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return call();
    throw SyntaxError(pos_, std::string("expected operand, found '") + c + "'");
  }

  Expression number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) ++p;
        pos_ = p;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw SyntaxError(start, "malformed number");
    return Expression::constant(value, dimension_);
  }

  Expression variable() {
    const std::size_t start = pos_;
    ++pos_;
    int index = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      index = index * 10 + (text_[pos_] - '0');
      if (index > 1000000) throw UnknownVariable(start, index, dimension_);
      ++pos_;
    }
    if (index < 1 || index > dimension_) throw UnknownVariable(start, index, dimension_);
    return Expression::variable(index, dimension_);
  }

  Expression call() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    Op op;
    if (name == "sin") {
      op = Op::Sin;
    } else if (name == "cos") {
      op = Op::Cos;
    } else if (name == "exp") {
      op = Op::Exp;
    } else if (name == "sqrt") {
      op = Op::Sqrt;
    } else if (name == "tanh") {
      op = Op::Tanh;
    } else {
      throw SyntaxError(start, "unknown function '" + std::string(name) + "'");
    }
    skip_space();
    expect('(');
    Expression arg = expr();
    expect(')');
    return Expression::unary(op, arg);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, std::string("expected '") + c + "', found end of input");
    if (text_[pos_] != c) throw SyntaxError(pos_, std::string("expected '") + c + "', found '" + text_[pos_] + "'");
    ++pos_;
  }

  std::string_view text_;
  int dimension_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses `text` as an expression over x1..x`dimension`.
inline Expression parse(std::string_view text, int dimension) {
  if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  return detail::Parser(text, dimension).run();
}

}  // namespace relayflow
