#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lyapsample/dual.hpp"
#include "lyapsample/interval.hpp"

namespace lyapsample {

/// Syntax or name error in an expression string.  column() is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int column)
      : std::runtime_error(what + " at column " + std::to_string(column)), column_(column) {}
  int column() const { return column_; }

 private:
  int column_;
};

/// Scalar expression over variables x1..xn, stored as a topologically ordered
/// tape (children precede parents, the root is the last node).
class Expr {
 public:
  enum class Op : std::uint8_t { kConst, kVar, kAdd, kSub, kMul, kDiv, kNeg, kSqrt, kPow, kAbs };

  struct Node {
    Op op = Op::kConst;
    int a = -1;
    int b = -1;
    int k = 0;  // variable index or integer exponent
    double value = 0.0;
  };

  Expr() = default;

  static Expr constant(double c, int dim) {
    Expr e(dim);
    e.nodes_.push_back({Op::kConst, -1, -1, 0, c});
    return e;
  }

  static Expr variable(int index, int dim) {
    if (index < 0 || index >= dim) throw std::out_of_range("Expr::variable: index out of range");
    Expr e(dim);
    e.nodes_.push_back({Op::kVar, -1, -1, index, 0.0});
    return e;
  }

  int dim() const { return dim_; }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  bool uses_abs() const {
    for (const auto& n : nodes_) {
      if (n.op == Op::kAbs) return true;
    }
    return false;
  }

  template <class T>
  T eval(std::span<const T> x) const {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("Expr::eval: dimension mismatch");
    if (nodes_.empty()) throw std::logic_error("Expr::eval: empty expression");
    std::vector<T> v;
    v.reserve(nodes_.size());
    for (const auto& n : nodes_) {
      switch (n.op) {
        case Op::kConst: v.push_back(constant_like(x[0], n.value)); break;
        case Op::kVar: v.push_back(x[static_cast<std::size_t>(n.k)]); break;
        case Op::kAdd: v.push_back(v[n.a] + v[n.b]); break;
        case Op::kSub: v.push_back(v[n.a] - v[n.b]); break;
        case Op::kMul: v.push_back(v[n.a] * v[n.b]); break;
        case Op::kDiv: v.push_back(checked_div(v[n.a], v[n.b])); break;
        case Op::kNeg: v.push_back(-v[n.a]); break;
        case Op::kSqrt: v.push_back(sqrt(v[n.a])); break;
        case Op::kPow: v.push_back(pow_int(v[n.a], n.k)); break;
        case Op::kAbs: v.push_back(abs(v[n.a])); break;
      }
    }
    return std::move(v.back());
  }

  template <class T>
  T eval(const std::vector<T>& x) const {
    return eval(std::span<const T>(x));
  }

  // Combinators (used for Euler discretization and equilibrium shifts).
  friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::kAdd, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::kSub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::kMul, a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return binary(Op::kDiv, a, b); }

  /// Replace every variable x_i by replacements[i] (all of dimension dim()).
  Expr substitute(const std::vector<Expr>& replacements) const {
    if (static_cast<int>(replacements.size()) != dim_) {
      throw std::invalid_argument("Expr::substitute: wrong number of replacements");
    }
    const int new_dim = replacements.empty() ? dim_ : replacements.front().dim_;
    Expr out(new_dim);
    std::vector<int> map(nodes_.size(), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.op == Op::kVar) {
        map[i] = out.append(replacements[static_cast<std::size_t>(n.k)]);
        continue;
      }
      Node m = n;
      if (m.a >= 0) m.a = map[static_cast<std::size_t>(m.a)];
      if (m.b >= 0) m.b = map[static_cast<std::size_t>(m.b)];
      out.nodes_.push_back(m);
      map[i] = static_cast<int>(out.nodes_.size()) - 1;
    }
    return out;
  }

  std::string to_string() const {
    if (nodes_.empty()) return "";
    return print(static_cast<int>(nodes_.size()) - 1);
  }

  static Expr parse(std::string_view text, int dim);

 private:
  explicit Expr(int dim) : dim_(dim) {}

  static Expr binary(Op op, const Expr& a, const Expr& b) {
    if (a.dim_ != b.dim_) throw std::invalid_argument("Expr: dimension mismatch in combinator");
    Expr out(a.dim_);
    const int ia = out.append(a);
    const int ib = out.append(b);
    out.nodes_.push_back({op, ia, ib, 0, 0.0});
    return out;
  }

  // Appends another tape, returning the index of its root.
  int append(const Expr& e) {
    const int offset = static_cast<int>(nodes_.size());
    for (Node n : e.nodes_) {
      if (n.a >= 0) n.a += offset;
      if (n.b >= 0) n.b += offset;
      nodes_.push_back(n);
    }
    return static_cast<int>(nodes_.size()) - 1;
  }

  static int precedence(Op op) {
    switch (op) {
      case Op::kAdd:
      case Op::kSub: return 1;
      case Op::kMul:
      case Op::kDiv: return 2;
      case Op::kNeg: return 3;
      case Op::kPow: return 4;
      default: return 5;
    }
  }

  static std::string number(double c) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), c);
    return std::string(buf, res.ptr);
  }

  std::string wrap(int i, int min_prec) const {
    const std::string s = print(i);
    return precedence(nodes_[static_cast<std::size_t>(i)].op) < min_prec ? "(" + s + ")" : s;
  }

  std::string print(int i) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::kConst: return n.value < 0.0 ? "(" + number(n.value) + ")" : number(n.value);
      case Op::kVar: return "x" + std::to_string(n.k + 1);
      case Op::kAdd: return wrap(n.a, 1) + " + " + wrap(n.b, 2);
      case Op::kSub: return wrap(n.a, 1) + " - " + wrap(n.b, 2);
      case Op::kMul: return wrap(n.a, 2) + "*" + wrap(n.b, 3);
      case Op::kDiv: return wrap(n.a, 2) + "/" + wrap(n.b, 3);
      case Op::kNeg: return "-" + wrap(n.a, 3);
      case Op::kPow: return wrap(n.a, 5) + "^" + std::to_string(n.k);
      case Op::kSqrt: return "sqrt(" + print(n.a) + ")";
      case Op::kAbs: return "abs(" + print(n.a) + ")";
    }
    return "";
  }

  friend class ExprParser;

  int dim_ = 0;
  std::vector<Node> nodes_;
};

/// Recursive-descent parser for the expression grammar:
///   expr  := term (('+'|'-') term)*
///   term  := unary (('*'|'/') unary)*
///   unary := ('-'|'+') unary | power
///   power := primary ('^' integer)?
///   primary := number | 'x'<index> | ('sqrt'|'abs') '(' expr ')' | '(' expr ')'
class ExprParser {
 public:
  ExprParser(std::string_view text, int dim) : text_(text), dim_(dim), out_(dim) {}

  Expr run() {
    if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("expression dimension must be in [1, 8]");
    check_parentheses();
    skip_ws();
    if (at_end()) fail("empty expression");
    parse_expr();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected '") + text_[pos_] + "'");
    return std::move(out_);
  }

 private:
  using Op = Expr::Op;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, static_cast<int>(pos_) + 1); }

  void check_parentheses() const {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < text_.size(); ++i) {
      if (text_[i] == '(') open.push_back(i);
      if (text_[i] == ')') {
        if (open.empty()) throw ParseError("unbalanced ')'", static_cast<int>(i) + 1);
        open.pop_back();
      }
    }
    if (!open.empty()) throw ParseError("unbalanced '('", static_cast<int>(open.back()) + 1);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  int emit(Op op, int a, int b = -1, int k = 0, double value = 0.0) {
    out_.nodes_.push_back({op, a, b, k, value});
    return static_cast<int>(out_.nodes_.size()) - 1;
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      const int rhs = parse_term();
      lhs = emit(c == '+' ? Op::kAdd : Op::kSub, lhs, rhs);
    }
  }

  int parse_term() {
    int lhs = parse_unary();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      const int rhs = parse_unary();
      lhs = emit(c == '*' ? Op::kMul : Op::kDiv, lhs, rhs);
    }
  }

  int parse_unary() {
    skip_ws();
    if (peek() == '-') {
      ++pos_;
      return emit(Op::kNeg, parse_unary());
    }
    if (peek() == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    skip_ws();
    if (peek() != '^') return base;
    ++pos_;
    skip_ws();
    const std::size_t start = pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) {
      pos_ = start;
      fail("'^' expects a non-negative integer exponent");
    }
    int k = 0;
    std::from_chars(text_.data() + start, text_.data() + pos_, k);
    skip_ws();
    if (peek() == '^') fail("chained '^' is not supported; add parentheses");
    return emit(Op::kPow, base, -1, k);
  }

  int parse_primary() {
    skip_ws();
    if (at_end()) fail("expected an operand");
    const char c = peek();
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr();
      skip_ws();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (!at_end() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      const std::string_view word = text_.substr(start, pos_ - start);
      if (word == "x") {
        const std::size_t dstart = pos_;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        int idx = 0;
        if (dstart == pos_ || std::from_chars(text_.data() + dstart, text_.data() + pos_, idx).ec != std::errc{} ||
            idx < 1 || idx > dim_) {
          throw ParseError("unknown variable '" + std::string(text_.substr(start, pos_ - start)) + "'",
                           static_cast<int>(start) + 1);
        }
        return emit(Op::kVar, -1, -1, idx - 1);
      }
      if (word == "sqrt" || word == "abs") {
        skip_ws();
        if (peek() != '(') fail("expected '(' after " + std::string(word));
        ++pos_;
        const int inner = parse_expr();
        skip_ws();
        if (peek() != ')') fail("expected ')'");
        ++pos_;
        return emit(word == "sqrt" ? Op::kSqrt : Op::kAbs, inner);
      }
      throw ParseError("unknown name '" + std::string(word) + "'", static_cast<int>(start) + 1);
    }
    fail(std::string("unexpected '") + c + "'");
  }

  int parse_number() {
    const std::size_t start = pos_;
    double value = 0.0;
    auto res = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (res.ec != std::errc{}) fail("malformed number");
    pos_ = static_cast<std::size_t>(res.ptr - text_.data());
    (void)start;
    return emit(Op::kConst, -1, -1, 0, value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int dim_;
  Expr out_;
};

inline Expr Expr::parse(std::string_view text, int dim) { return ExprParser(text, dim).run(); }

inline Expr parse_expr(std::string_view text, int dim) { return Expr::parse(text, dim); }

/// Vector-valued map R^n -> R^m given by m component expressions.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::vector<Expr> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("VectorField: no components");
    for (const auto& c : components_) {
      if (c.dim() != components_.front().dim()) throw std::invalid_argument("VectorField: mixed input dimensions");
    }
  }

  static VectorField parse(const std::vector<std::string>& texts, int dim) {
    std::vector<Expr> comps;
    comps.reserve(texts.size());
    for (const auto& t : texts) comps.push_back(Expr::parse(t, dim));
    return VectorField(std::move(comps));
  }

  int dim_in() const { return components_.empty() ? 0 : components_.front().dim(); }
  int dim_out() const { return static_cast<int>(components_.size()); }
  const Expr& operator[](std::size_t i) const { return components_[i]; }
  const std::vector<Expr>& components() const { return components_; }

  bool uses_abs() const {
    for (const auto& c : components_) {
      if (c.uses_abs()) return true;
    }
    return false;
  }

  template <class T>
  std::vector<T> eval(std::span<const T> x) const {
    std::vector<T> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back(c.eval(x));
    return out;
  }

  template <class T>
  std::vector<T> eval(const std::vector<T>& x) const {
    return eval(std::span<const T>(x));
  }

 private:
  std::vector<Expr> components_;
};

// ---------------------------------------------------------------------------
// Convenience evaluators.

inline double eval_real(const Expr& f, std::span<const double> x) { return f.eval(x); }

inline Interval eval_interval(const Expr& f, std::span<const Interval> box) { return f.eval(box); }

struct ValueGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

inline ValueGradient eval_grad(const Expr& f, std::span<const double> x) {
  const int n = f.dim();
  std::vector<Dual2<double>> seeds;
  seeds.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) seeds.push_back(Dual2<double>::variable(x[static_cast<std::size_t>(i)], i, n));
  const Dual2<double> r = f.eval(std::span<const Dual2<double>>(seeds));
  ValueGradient out{r.value(), std::vector<double>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) out.gradient[static_cast<std::size_t>(i)] = r.grad(i);
  return out;
}

struct HessianEnclosure {
  Interval value;
  IntervalVector gradient;
  IntervalMatrix hessian;
};

/// Seeds each coordinate as an interval-valued variable over the box.
inline std::vector<Dual2<Interval>> interval_seeds(std::span<const Interval> box) {
  const int n = static_cast<int>(box.size());
  std::vector<Dual2<Interval>> seeds;
  seeds.reserve(box.size());
  for (int i = 0; i < n; ++i) seeds.push_back(Dual2<Interval>::variable(box[static_cast<std::size_t>(i)], i, n));
  return seeds;
}

inline HessianEnclosure to_enclosure(const Dual2<Interval>& r) {
  const int n = r.dim();
  HessianEnclosure out{r.value(), IntervalVector(static_cast<std::size_t>(n)),
                       IntervalMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    out.gradient[static_cast<std::size_t>(i)] = r.grad(i);
    for (int j = 0; j < n; ++j) out.hessian(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = r.hess(i, j);
  }
  return out;
}

inline HessianEnclosure eval_hess_interval(const Expr& f, std::span<const Interval> box) {
  const auto seeds = interval_seeds(box);
  return to_enclosure(f.eval(std::span<const Dual2<Interval>>(seeds)));
}

}  // namespace lyapsample
