#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gsexp/error.hpp"
#include "gsexp/extended_real.hpp"

namespace gsexp {

enum class NodeKind { Number, Var, Add, Sub, Mul, Div, Pow, Neg, Call };
enum class Func { Exp, Log, Sqrt, Abs, Sign, Pow };
enum class Side { Left, Right };

inline const char* func_name(Func f) {
  switch (f) {
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sqrt: return "sqrt";
    case Func::Abs: return "abs";
    case Func::Sign: return "sign";
    case Func::Pow: return "pow";
  }
  return "?";
}

inline std::size_t func_arity(Func f) { return f == Func::Pow ? 2 : 1; }

/// Open interval (left, right) with possibly infinite ends.
struct Interval {
  ExtendedReal left;
  ExtendedReal right;

  bool contains(double x) const { return left.value() < x && x < right.value(); }
};

/// Immutable expression tree in the variable x. Copies share nodes.
class Expr {
 public:
  Expr() : Expr(number(0.0)) {}

  static Expr number(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Expr::number: literal must be finite");
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Number;
    n->value = v;
    return Expr(std::move(n));
  }
  static Expr variable() {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Var;
    return Expr(std::move(n));
  }
  static Expr binary(NodeKind k, Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = {std::move(a), std::move(b)};
    return Expr(std::move(n));
  }
  /// Unary minus; a literal operand is folded into a negative literal.
  static Expr negate(Expr a) {
    if (a.kind() == NodeKind::Number) return number(-a.value());
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Neg;
    n->args = {std::move(a)};
    return Expr(std::move(n));
  }
  static Expr call(Func f, std::vector<Expr> args) {
    if (args.size() != func_arity(f))
      throw std::invalid_argument(std::string("Expr::call: wrong arity for ") + func_name(f));
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Call;
    n->func = f;
    n->args = std::move(args);
    return Expr(std::move(n));
  }

  NodeKind kind() const { return node_->kind; }
  double value() const { return node_->value; }
  Func func() const { return node_->func; }
  const std::vector<Expr>& args() const { return node_->args; }
  const Expr& arg(std::size_t i) const { return node_->args.at(i); }

  bool depends_on_x() const {
    if (kind() == NodeKind::Var) return true;
    return std::any_of(args().begin(), args().end(), [](const Expr& e) { return e.depends_on_x(); });
  }

  friend bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
      case NodeKind::Number:
        // bitwise, so that -0 and 0 differ as they do when printed
        return std::signbit(a.value()) == std::signbit(b.value()) && a.value() == b.value();
      case NodeKind::Var: return true;
      case NodeKind::Call:
        if (a.func() != b.func()) return false;
        break;
      default: break;
    }
    if (a.args().size() != b.args().size()) return false;
    for (std::size_t i = 0; i < a.args().size(); ++i)
      if (!(a.args()[i] == b.args()[i])) return false;
    return true;
  }

  /// Fully parenthesized text that parses back to the same tree.
  std::string str() const {
    std::string out;
    print(out);
    return out;
  }

  /// Throws DomainFault where the expression is undefined or the result is not finite.
  double eval(double x) const {
    double v = eval_node(x);
    if (!std::isfinite(v)) throw DomainFault(str(), x, "non-finite result");
    return v;
  }

 private:
  struct Node {
    NodeKind kind = NodeKind::Number;
    double value = 0.0;
    Func func = Func::Exp;
    std::vector<Expr> args;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static void print_number(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", std::fabs(v));
    if (std::signbit(v)) {
      out += "(-";
      out += buf;
      out += ')';
    } else {
      out += buf;
    }
  }

  void print(std::string& out) const {
    switch (kind()) {
      case NodeKind::Number: print_number(out, value()); return;
      case NodeKind::Var: out += 'x'; return;
      case NodeKind::Neg:
        out += "(-";
        arg(0).print(out);
        out += ')';
        return;
      case NodeKind::Call:
        out += func_name(func());
        out += '(';
        for (std::size_t i = 0; i < args().size(); ++i) {
          if (i) out += ", ";
          args()[i].print(out);
        }
        out += ')';
        return;
      default: {
        static constexpr char ops[] = {'+', '-', '*', '/', '^'};
        char op = ops[static_cast<int>(kind()) - static_cast<int>(NodeKind::Add)];
        out += '(';
        arg(0).print(out);
        out += ' ';
        out += op;
        out += ' ';
        arg(1).print(out);
        out += ')';
        return;
      }
    }
  }

  double eval_node(double x) const;

  std::shared_ptr<const Node> node_;

  friend class CompiledExpr;
};

inline Expr operator+(Expr a, Expr b) { return Expr::binary(NodeKind::Add, std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return Expr::binary(NodeKind::Sub, std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return Expr::binary(NodeKind::Mul, std::move(a), std::move(b)); }
inline Expr operator/(Expr a, Expr b) { return Expr::binary(NodeKind::Div, std::move(a), std::move(b)); }
inline Expr operator-(Expr a) { return Expr::negate(std::move(a)); }
inline Expr power(Expr a, Expr b) { return Expr::binary(NodeKind::Pow, std::move(a), std::move(b)); }
inline Expr operator+(Expr a, double b) { return std::move(a) + Expr::number(b); }
inline Expr operator*(double a, Expr b) { return Expr::number(a) * std::move(b); }
inline Expr operator-(Expr a, double b) { return std::move(a) - Expr::number(b); }
inline Expr call(Func f, Expr a) { return Expr::call(f, {std::move(a)}); }

namespace detail {

enum class Fault { None, DivZero, LogDomain, SqrtDomain, PowDomain };

inline const char* fault_reason(Fault f) {
  switch (f) {
    case Fault::DivZero: return "division by zero";
    case Fault::LogDomain: return "log of a non-positive number";
    case Fault::SqrtDomain: return "sqrt of a negative number";
    case Fault::PowDomain: return "power undefined for this base and exponent";
    default: return "";
  }
}

inline bool is_integer(double v) { return std::isfinite(v) && std::nearbyint(v) == v; }

// Shared by the tree evaluator and the bytecode so both give identical bits.
inline double pow_value(double a, double b, Fault& fault) {
  if (a < 0.0 && !is_integer(b)) {
    fault = Fault::PowDomain;
    return 0.0;
  }
  if (a == 0.0 && b < 0.0) {
    fault = Fault::PowDomain;
    return 0.0;
  }
  if (b == 2.0) return a * a;
  if (b == 1.0) return a;
  if (b == -1.0) return 1.0 / a;
  if (b == 0.5) return std::sqrt(a);
  if (b == -0.5) return 1.0 / std::sqrt(a);
  return std::pow(a, b);
}

inline double div_value(double a, double b, Fault& fault) {
  if (b == 0.0) {
    fault = Fault::DivZero;
    return 0.0;
  }
  return a / b;
}

inline double func_value(Func f, double a, Fault& fault) {
  switch (f) {
    case Func::Exp: return std::exp(a);
    case Func::Log:
      if (!(a > 0.0)) {
        fault = Fault::LogDomain;
        return 0.0;
      }
      return std::log(a);
    case Func::Sqrt:
      if (a < 0.0) {
        fault = Fault::SqrtDomain;
        return 0.0;
      }
      return std::sqrt(a);
    case Func::Abs: return std::fabs(a);
    case Func::Sign: return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    case Func::Pow: break;
  }
  return 0.0;
}

}  // namespace detail

inline double Expr::eval_node(double x) const {
  detail::Fault fault = detail::Fault::None;
  double r = 0.0;
  switch (kind()) {
    case NodeKind::Number: return value();
    case NodeKind::Var: return x;
    case NodeKind::Neg: return -arg(0).eval_node(x);
    case NodeKind::Add: return arg(0).eval_node(x) + arg(1).eval_node(x);
    case NodeKind::Sub: return arg(0).eval_node(x) - arg(1).eval_node(x);
    case NodeKind::Mul: return arg(0).eval_node(x) * arg(1).eval_node(x);
    case NodeKind::Div: {
      double a = arg(0).eval_node(x);
      r = detail::div_value(a, arg(1).eval_node(x), fault);
      break;
    }
    case NodeKind::Pow: {
      double a = arg(0).eval_node(x);
      r = detail::pow_value(a, arg(1).eval_node(x), fault);
      break;
    }
    case NodeKind::Call:
      if (func() == Func::Pow) {
        double a = arg(0).eval_node(x);
        r = detail::pow_value(a, arg(1).eval_node(x), fault);
      } else {
        r = detail::func_value(func(), arg(0).eval_node(x), fault);
      }
      break;
  }
  if (fault != detail::Fault::None) throw DomainFault(str(), x, detail::fault_reason(fault));
  return r;
}

inline double eval(const Expr& e, double x) { return e.eval(x); }
inline std::string to_string(const Expr& e) { return e.str(); }

// ---------------------------------------------------------------- parser

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ < s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_ + 1); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= s_.size()) fail(std::string("expected '") + c + "' but input ended");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+'))
        lhs = lhs + parse_term();
      else if (accept('-'))
        lhs = lhs - parse_term();
      else
        return lhs;
    }
  }

  Expr parse_term() {
    Expr lhs = parse_factor();
    for (;;) {
      if (accept('*'))
        lhs = lhs * parse_factor();
      else if (accept('/'))
        lhs = lhs / parse_factor();
      else
        return lhs;
    }
  }

  Expr parse_factor() {
    if (accept('-')) return Expr::negate(parse_factor());
    Expr base = parse_primary();
    if (accept('^')) return power(std::move(base), parse_factor());
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      expect(')');
      return e;
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail("malformed exponent in number");
    }
    std::string lit(s_.substr(start, pos_ - start));
    double v = std::strtod(lit.c_str(), nullptr);
    if (!std::isfinite(v)) {
      pos_ = start;
      fail("number out of range");
    }
    return Expr::number(v);
  }

  Expr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string_view name = s_.substr(start, pos_ - start);
    if (name == "x") return Expr::variable();
    static constexpr Func funcs[] = {Func::Exp, Func::Log, Func::Sqrt, Func::Abs, Func::Sign, Func::Pow};
    for (Func f : funcs) {
      if (name != func_name(f)) continue;
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != '(') fail("expected '(' after function name");
      std::size_t call_pos = start;
      ++pos_;
      std::vector<Expr> args;
      args.push_back(parse_expr());
      while (accept(',')) args.push_back(parse_expr());
      expect(')');
      if (args.size() != func_arity(f))
        throw ParseError(std::string(func_name(f)) + " takes " + std::to_string(func_arity(f)) +
                             " argument(s), got " + std::to_string(args.size()),
                         call_pos + 1);
      return Expr::call(f, std::move(args));
    }
    pos_ = start;
    fail("unknown identifier '" + std::string(name) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses the coefficient grammar; throws ParseError with a 1-based offset.
inline Expr parse(std::string_view text) { return detail::Parser(text).parse_all(); }

// ---------------------------------------------------------------- simplify

/// Folds constant subtrees and trivial identities (0*e, e*1, e+0, ...).
inline Expr simplify(const Expr& e) {
  auto is_num = [](const Expr& a, double v) { return a.kind() == NodeKind::Number && a.value() == v; };
  if (e.kind() == NodeKind::Number || e.kind() == NodeKind::Var) return e;
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(simplify(a));
  Expr r;
  switch (e.kind()) {
    case NodeKind::Neg: r = Expr::negate(args[0]); break;
    case NodeKind::Call: r = Expr::call(e.func(), args); break;
    default: r = Expr::binary(e.kind(), args[0], args[1]); break;
  }
  if (!r.depends_on_x()) {
    try {
      return Expr::number(r.eval(0.0));
    } catch (const DomainFault&) {
      return r;
    }
  }
  switch (r.kind()) {
    case NodeKind::Mul:
      if (is_num(args[0], 0.0) || is_num(args[1], 0.0)) return Expr::number(0.0);
      if (is_num(args[0], 1.0)) return args[1];
      if (is_num(args[1], 1.0)) return args[0];
      break;
    case NodeKind::Add:
      if (is_num(args[0], 0.0)) return args[1];
      if (is_num(args[1], 0.0)) return args[0];
      break;
    case NodeKind::Sub:
      if (is_num(args[1], 0.0)) return args[0];
      if (args[0] == args[1]) return Expr::number(0.0);
      break;
    case NodeKind::Div:
      if (is_num(args[0], 0.0)) return Expr::number(0.0);
      if (is_num(args[1], 1.0)) return args[0];
      break;
    case NodeKind::Pow:
      if (is_num(args[1], 1.0)) return args[0];
      break;
    case NodeKind::Neg:
      if (args[0].kind() == NodeKind::Neg) return args[0].arg(0);
      break;
    default: break;
  }
  return r;
}

/// True if the expression folds to the literal 0.
inline bool is_structurally_zero(const Expr& e) {
  Expr s = simplify(e);
  return s.kind() == NodeKind::Number && s.value() == 0.0;
}

// ---------------------------------------------------------------- compiled form

/// Flat postfix program for fast repeated evaluation. Produces the same bits
/// as Expr::eval; on a fault it re-evaluates the tree to report the exact
/// sub-expression.
class CompiledExpr {
 public:
  CompiledExpr() : CompiledExpr(Expr::number(0.0)) {}

  explicit CompiledExpr(Expr e) : expr_(std::move(e)) {
    emit(expr_);
    int depth = 0, max_depth = 0;
    for (const auto& in : code_) {
      depth += stack_delta(in.op);
      max_depth = std::max(max_depth, depth);
    }
    if (max_depth > kStack) throw std::invalid_argument("CompiledExpr: expression nests too deeply");
  }

  const Expr& expr() const { return expr_; }

  enum class Status { Ok, Fault, NonFinite };

  /// Evaluates without throwing; returns false where the expression is undefined.
  bool try_eval(double x, double& out) const noexcept { return status(x, out) == Status::Ok; }

  /// Like try_eval, but tells a domain fault apart from overflow.
  Status status(double x, double& out) const noexcept {
    double st[kStack];
    int sp = 0;
    detail::Fault fault = detail::Fault::None;
    for (const auto& in : code_) {
      switch (in.op) {
        case Op::Const: st[sp++] = in.k; break;
        case Op::Var: st[sp++] = x; break;
        case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
        case Op::Add: --sp; st[sp - 1] = st[sp - 1] + st[sp]; break;
        case Op::Sub: --sp; st[sp - 1] = st[sp - 1] - st[sp]; break;
        case Op::Mul: --sp; st[sp - 1] = st[sp - 1] * st[sp]; break;
        case Op::Div: --sp; st[sp - 1] = detail::div_value(st[sp - 1], st[sp], fault); break;
        case Op::Pow: --sp; st[sp - 1] = detail::pow_value(st[sp - 1], st[sp], fault); break;
        case Op::PowConst: st[sp - 1] = detail::pow_value(st[sp - 1], in.k, fault); break;
        case Op::Square: st[sp - 1] = st[sp - 1] * st[sp - 1]; break;
        case Op::Recip: st[sp - 1] = detail::div_value(1.0, st[sp - 1], fault); break;
        case Op::Func: st[sp - 1] = detail::func_value(in.f, st[sp - 1], fault); break;
      }
    }
    // a fault leaves a placeholder value and is sticky, so one check suffices
    if (fault != detail::Fault::None) return Status::Fault;
    out = st[0];
    return std::isfinite(out) ? Status::Ok : Status::NonFinite;
  }

  double operator()(double x) const {
    double v;
    if (try_eval(x, v)) return v;
    return expr_.eval(x);  // throws the detailed fault
  }

 private:
  static constexpr int kStack = 64;
  enum class Op : std::uint8_t { Const, Var, Neg, Add, Sub, Mul, Div, Pow, PowConst, Square, Recip, Func };
  struct Instr {
    Op op;
    Func f;
    double k;
  };

  static int stack_delta(Op op) {
    switch (op) {
      case Op::Const:
      case Op::Var: return 1;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow: return -1;
      default: return 0;
    }
  }

  void emit(const Expr& e) {
    if (e.kind() != NodeKind::Number && !e.depends_on_x()) {
      double v;
      CompiledExpr sub;
      sub.code_.clear();
      sub.emit_raw(e);
      if (sub.try_eval(0.0, v)) {
        code_.push_back({Op::Const, Func::Exp, v});
        return;
      }
    }
    emit_raw(e);
  }

  void emit_raw(const Expr& e) {
    switch (e.kind()) {
      case NodeKind::Number: code_.push_back({Op::Const, Func::Exp, e.value()}); return;
      case NodeKind::Var: code_.push_back({Op::Var, Func::Exp, 0.0}); return;
      case NodeKind::Neg:
        emit(e.arg(0));
        code_.push_back({Op::Neg, Func::Exp, 0.0});
        return;
      case NodeKind::Call:
        if (e.func() == Func::Pow) {
          emit_pow(e.arg(0), e.arg(1));
        } else {
          emit(e.arg(0));
          code_.push_back({Op::Func, e.func(), 0.0});
        }
        return;
      case NodeKind::Pow: emit_pow(e.arg(0), e.arg(1)); return;
      default: {
        emit(e.arg(0));
        emit(e.arg(1));
        Op op = e.kind() == NodeKind::Add   ? Op::Add
                : e.kind() == NodeKind::Sub ? Op::Sub
                : e.kind() == NodeKind::Mul ? Op::Mul
                                            : Op::Div;
        code_.push_back({op, Func::Exp, 0.0});
        return;
      }
    }
  }

  void emit_pow(const Expr& base, const Expr& ex) {
    emit(base);
    std::size_t mark = code_.size();
    emit(ex);
    if (code_.size() == mark + 1 && code_.back().op == Op::Const) {
      double k = code_.back().k;
      code_.pop_back();
      if (k == 2.0)
        code_.push_back({Op::Square, Func::Exp, 0.0});
      else if (k == -1.0)
        code_.push_back({Op::Recip, Func::Exp, 0.0});
      else if (k != 1.0)
        code_.push_back({Op::PowConst, Func::Exp, k});
      return;
    }
    code_.push_back({Op::Pow, Func::Exp, 0.0});
  }

  Expr expr_;
  std::vector<Instr> code_;
};

// ---------------------------------------------------------------- singularity candidates

namespace detail {

// Polynomial in x with coefficients in ascending order.
using Poly = std::vector<double>;

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline void poly_trim(Poly& p) {
  while (p.size() > 1 && p.back() == 0.0) p.pop_back();
}

inline std::optional<Poly> as_polynomial(const Expr& e, int max_degree = 40) {
  switch (e.kind()) {
    case NodeKind::Number: return Poly{e.value()};
    case NodeKind::Var: return Poly{0.0, 1.0};
    case NodeKind::Neg: {
      auto a = as_polynomial(e.arg(0), max_degree);
      if (!a) return std::nullopt;
      for (double& c : *a) c = -c;
      return a;
    }
    case NodeKind::Add:
    case NodeKind::Sub: {
      auto a = as_polynomial(e.arg(0), max_degree);
      auto b = as_polynomial(e.arg(1), max_degree);
      if (!a || !b) return std::nullopt;
      Poly r(std::max(a->size(), b->size()), 0.0);
      double sgn = e.kind() == NodeKind::Add ? 1.0 : -1.0;
      for (std::size_t i = 0; i < a->size(); ++i) r[i] += (*a)[i];
      for (std::size_t i = 0; i < b->size(); ++i) r[i] += sgn * (*b)[i];
      poly_trim(r);
      return r;
    }
    case NodeKind::Mul: {
      auto a = as_polynomial(e.arg(0), max_degree);
      auto b = as_polynomial(e.arg(1), max_degree);
      if (!a || !b) return std::nullopt;
      if (static_cast<int>(a->size() + b->size()) - 2 > max_degree) return std::nullopt;
      Poly r = poly_mul(*a, *b);
      poly_trim(r);
      return r;
    }
    case NodeKind::Div: {
      Expr d = simplify(e.arg(1));
      if (d.kind() != NodeKind::Number || d.value() == 0.0) return std::nullopt;
      auto a = as_polynomial(e.arg(0), max_degree);
      if (!a) return std::nullopt;
      for (double& c : *a) c /= d.value();
      return a;
    }
    case NodeKind::Pow:
    case NodeKind::Call: {
      if (e.kind() == NodeKind::Call && e.func() != Func::Pow) return std::nullopt;
      Expr k = simplify(e.arg(1));
      if (k.kind() != NodeKind::Number || !is_integer(k.value()) || k.value() < 0.0) return std::nullopt;
      auto a = as_polynomial(e.arg(0), max_degree);
      if (!a) return std::nullopt;
      int n = static_cast<int>(k.value());
      if (static_cast<int>(a->size() - 1) * n > max_degree) return std::nullopt;
      Poly r{1.0};
      for (int i = 0; i < n; ++i) r = poly_mul(r, *a);
      poly_trim(r);
      return r;
    }
  }
  return std::nullopt;
}

inline double poly_eval(const Poly& p, double x) {
  double r = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

inline double poly_abs_eval(const Poly& p, double x) {
  double r = 0.0, ax = std::fabs(x);
  for (std::size_t i = p.size(); i-- > 0;) r = r * ax + std::fabs(p[i]);
  return r;
}

inline Poly poly_derivative(const Poly& p) {
  if (p.size() <= 1) return Poly{0.0};
  Poly d(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = p[i] * static_cast<double>(i);
  return d;
}

// Bisection to full double resolution on a bracket with a sign change.
template <class F>
double bisect(F&& f, double lo, double hi, double flo) {
  for (int it = 0; it < 2000; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Real roots of a polynomial, by recursing on the derivative: between
// consecutive critical points the polynomial is monotone.
inline std::vector<double> poly_real_roots(Poly p) {
  poly_trim(p);
  std::size_t deg = p.size() - 1;
  if (deg == 0) return {};
  if (deg == 1) return {-p[0] / p[1]};
  if (deg == 2) {
    double a = p[2], b = p[1], c = p[0];
    double disc = b * b - 4 * a * c;
    double scale = b * b + std::fabs(4 * a * c);
    if (disc < 0.0 && -disc > 1e-14 * scale) return {};
    if (disc <= 1e-14 * scale) return {-b / (2 * a)};
    double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    std::vector<double> r;
    if (q != 0.0) r = {q / a, c / q};
    else r = {0.0};
    std::sort(r.begin(), r.end());
    return r;
  }
  double lead = std::fabs(p.back());
  double bound = 0.0;
  for (std::size_t i = 0; i < deg; ++i) bound = std::max(bound, std::fabs(p[i]) / lead);
  bound += 1.0;  // Cauchy bound
  std::vector<double> crit = poly_real_roots(poly_derivative(p));
  std::vector<double> pts{-bound};
  for (double c : crit)
    if (c > -bound && c < bound) pts.push_back(c);
  pts.push_back(bound);
  std::vector<double> roots;
  auto f = [&](double x) { return poly_eval(p, x); };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double v = f(pts[i]);
    if (i > 0 && i + 1 < pts.size() && std::fabs(v) <= 1e-12 * poly_abs_eval(p, pts[i])) {
      roots.push_back(pts[i]);
      continue;
    }
    if (i + 1 < pts.size()) {
      double w = f(pts[i + 1]);
      bool at_next_crit = i + 2 < pts.size() && std::fabs(w) <= 1e-12 * poly_abs_eval(p, pts[i + 1]);
      if (!at_next_crit && v != 0.0 && w != 0.0 && ((v < 0.0) != (w < 0.0)))
        roots.push_back(bisect(f, pts[i], pts[i + 1], v));
    }
  }
  return roots;
}

inline double scan_map(double u) { return std::tan(u); }

// Grid scan on the arctan-compactified interval: sign changes and
// defined/undefined transitions of g, refined by bisection.
inline void numeric_zero_scan(const CompiledExpr& g, const Interval& J, std::vector<double>& out) {
  constexpr int kGrid = 4096;
  double ua = std::atan(J.left.value()), ub = std::atan(J.right.value());
  enum Cls { Undef, Neg, Zero, Pos, Overflow };
  auto classify = [&](double x, double& v) {
    auto st = g.status(x, v);
    if (st == CompiledExpr::Status::Fault) return Undef;
    if (st == CompiledExpr::Status::NonFinite) return Overflow;
    return v > 0.0 ? Pos : (v < 0.0 ? Neg : Zero);
  };
  double prev_x = 0.0, prev_v = 0.0;
  Cls prev = Undef;
  bool have_prev = false;
  for (int i = 1; i < kGrid; ++i) {
    double x = scan_map(ua + (ub - ua) * i / kGrid);
    if (!J.contains(x)) continue;
    double v;
    Cls c = classify(x, v);
    if (c == Overflow) continue;  // huge but defined: not a domain boundary
    if (c == Zero) out.push_back(x);
    if (have_prev && c != prev && c != Zero && prev != Zero) {
      double lo = prev_x, hi = x;
      if (c != Undef && prev != Undef) {
        out.push_back(bisect([&](double t) {
          double w;
          return g.try_eval(t, w) ? w : std::numeric_limits<double>::quiet_NaN();
        }, lo, hi, prev_v));
      } else {
        bool lo_def = prev != Undef;
        for (int it = 0; it < 200; ++it) {
          double mid = 0.5 * (lo + hi);
          if (mid <= lo || mid >= hi) break;
          if (hi - lo <= 1e-12 * std::max(1.0, std::fabs(mid))) break;
          double w;
          bool def = g.try_eval(mid, w);
          if (def == lo_def)
            lo = mid;
          else
            hi = mid;
        }
        out.push_back(0.5 * (lo + hi));
      }
    }
    prev = c;
    prev_x = x;
    prev_v = v;
    have_prev = true;
  }
}

// Zeros (and, for non-polynomial pieces, domain boundaries) of g in J.
inline void zeros_of(const Expr& g, const Interval& J, std::vector<double>& out) {
  if (!g.depends_on_x()) return;
  switch (g.kind()) {
    case NodeKind::Var: out.push_back(0.0); return;
    case NodeKind::Neg: zeros_of(g.arg(0), J, out); return;
    case NodeKind::Mul:
      zeros_of(g.arg(0), J, out);
      zeros_of(g.arg(1), J, out);
      return;
    case NodeKind::Div: zeros_of(g.arg(0), J, out); return;
    case NodeKind::Pow:
      if (!g.arg(1).depends_on_x()) {
        zeros_of(g.arg(0), J, out);
        return;
      }
      break;
    case NodeKind::Call:
      if (g.func() == Func::Exp) return;
      if (g.func() == Func::Abs || g.func() == Func::Sqrt || g.func() == Func::Sign ||
          (g.func() == Func::Pow && !g.arg(1).depends_on_x())) {
        zeros_of(g.arg(0), J, out);
        return;
      }
      break;
    default: break;
  }
  if (auto p = as_polynomial(g)) {
    for (double r : poly_real_roots(*p)) out.push_back(r);
    return;
  }
  numeric_zero_scan(CompiledExpr(g), J, out);
}

inline void collect_critical(const Expr& e, const Interval& J, std::vector<double>& out) {
  for (const auto& a : e.args()) collect_critical(a, J, out);
  switch (e.kind()) {
    case NodeKind::Div: zeros_of(e.arg(1), J, out); break;
    case NodeKind::Pow:
    case NodeKind::Call: {
      bool is_pow = e.kind() == NodeKind::Pow || e.func() == Func::Pow;
      if (is_pow) {
        Expr k = simplify(e.arg(1));
        bool safe = k.kind() == NodeKind::Number && is_integer(k.value()) && k.value() >= 0.0;
        if (!safe) zeros_of(e.arg(0), J, out);
      } else if (e.func() == Func::Log || e.func() == Func::Sqrt || e.func() == Func::Sign) {
        zeros_of(e.arg(0), J, out);
      }
      break;
    }
    default: break;
  }
}

}  // namespace detail

/// Interior points of J where e may be undefined or unbounded (an
/// over-approximation), sorted and de-duplicated.
inline std::vector<double> candidate_singularities(const Expr& e, const Interval& J) {
  if (!(J.left < J.right)) throw std::invalid_argument("candidate_singularities: empty interval");
  std::vector<double> raw;
  detail::collect_critical(e, J, raw);
  std::vector<double> pts;
  for (double x : raw)
    if (std::isfinite(x) && J.contains(x)) pts.push_back(x);
  std::sort(pts.begin(), pts.end());
  // within a cluster keep the shortest mantissa: exact roots (0, 1/4, ...)
  // beat the last bisection midpoint next to them
  auto bits = [](double x) {
    if (x == 0.0) return 0;
    int e;
    double m = std::frexp(std::fabs(x), &e);
    int n = 0;
    while (m != 0.0 && n < 64) {
      m = std::ldexp(m, 1);
      m -= std::floor(m);
      ++n;
    }
    return n;
  };
  std::vector<double> out;
  double anchor = 0.0;
  for (double x : pts) {
    if (!out.empty() && std::fabs(x - anchor) <= 1e-10 * std::max(1.0, std::fabs(x))) {
      if (bits(x) < bits(out.back())) out.back() = x;
      continue;
    }
    out.push_back(x);
    anchor = x;
  }
  return out;
}

// ---------------------------------------------------------------- leading exponent

namespace detail {

// Generalized power series in t -> 0+:  sum c_i t^{e_i} + O(t^rem).
struct Series {
  struct Term {
    double c;
    double e;
  };
  bool ok = true;
  std::vector<Term> terms;  // ascending exponents, nonzero coefficients
  double rem = std::numeric_limits<double>::infinity();

  static Series invalid() {
    Series s;
    s.ok = false;
    return s;
  }
  static Series constant(double c) {
    Series s;
    if (c != 0.0) s.terms.push_back({c, 0.0});
    return s;
  }
  bool exact_zero() const { return ok && terms.empty() && std::isinf(rem); }
  double lead_order() const { return terms.empty() ? rem : terms.front().e; }
};

constexpr std::size_t kMaxTerms = 8;
constexpr double kExpTol = 1e-12;
constexpr double kCancelTol = 1e-12;

inline void normalize(Series& s) {
  std::sort(s.terms.begin(), s.terms.end(), [](auto& a, auto& b) { return a.e < b.e; });
  std::vector<Series::Term> merged;
  std::vector<double> mags;
  for (const auto& t : s.terms) {
    if (!merged.empty() && std::fabs(merged.back().e - t.e) <= kExpTol) {
      merged.back().c += t.c;
      mags.back() = std::max(mags.back(), std::fabs(t.c));
    } else {
      merged.push_back(t);
      mags.push_back(std::fabs(t.c));
    }
  }
  s.terms.clear();
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (merged[i].e >= s.rem - kExpTol) break;
    if (std::fabs(merged[i].c) <= kCancelTol * mags[i]) continue;
    s.terms.push_back(merged[i]);
  }
  if (s.terms.size() > kMaxTerms) {
    s.rem = std::min(s.rem, s.terms[kMaxTerms].e);
    s.terms.resize(kMaxTerms);
  }
}

inline Series add(const Series& a, const Series& b, double sign = 1.0) {
  if (!a.ok || !b.ok) return Series::invalid();
  Series r;
  r.rem = std::min(a.rem, b.rem);
  r.terms = a.terms;
  for (auto t : b.terms) r.terms.push_back({sign * t.c, t.e});
  normalize(r);
  return r;
}

inline Series mul(const Series& a, const Series& b) {
  if (!a.ok || !b.ok) return Series::invalid();
  if (a.exact_zero() || b.exact_zero()) return Series::constant(0.0);
  Series r;
  r.rem = std::min(a.lead_order() + b.rem, b.lead_order() + a.rem);
  for (auto x : a.terms)
    for (auto y : b.terms) r.terms.push_back({x.c * y.c, x.e + y.e});
  normalize(r);
  return r;
}

inline Series scale(Series s, double k) {
  for (auto& t : s.terms) t.c *= k;
  return s;
}

// f(u) with u = O(t^m), m > 0, given coefficients f_k of u^k.
inline Series compose_power_series(const Series& u, const std::vector<double>& fk) {
  Series r = Series::constant(fk[0]);
  Series upow = Series::constant(1.0);
  double m = u.lead_order();
  for (std::size_t k = 1; k < fk.size(); ++k) {
    upow = mul(upow, u);
    if (!upow.ok) return Series::invalid();
    if (fk[k] != 0.0) r = add(r, scale(upow, fk[k]));
  }
  r.rem = std::min(r.rem, m * static_cast<double>(fk.size()));
  normalize(r);
  return r;
}

inline std::size_t series_order(const Series& u) {
  double m = u.lead_order();
  if (!(m > 0.0)) return 0;
  double target = std::min(u.rem, 12.0);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(target / m)) + 1, 2, 12);
}

// (c0 t^e0 (1+u))^alpha
inline Series power_series(const Series& a, double alpha) {
  if (!a.ok || a.terms.empty()) return Series::invalid();
  double c0 = a.terms.front().c, e0 = a.terms.front().e;
  if (c0 < 0.0 && !is_integer(alpha)) return Series::invalid();
  Series u;
  u.rem = a.rem - e0;
  for (std::size_t i = 1; i < a.terms.size(); ++i)
    u.terms.push_back({a.terms[i].c / c0, a.terms[i].e - e0});
  normalize(u);
  Series r;
  if (u.exact_zero()) {
    r = Series::constant(1.0);
  } else {
    std::size_t n = series_order(u);
    if (n == 0) return Series::invalid();
    std::vector<double> fk(n, 1.0);
    for (std::size_t k = 1; k < n; ++k) fk[k] = fk[k - 1] * (alpha - static_cast<double>(k - 1)) / k;
    r = compose_power_series(u, fk);
  }
  double lead = std::pow(c0, alpha);
  if (!std::isfinite(lead) || lead == 0.0) return Series::invalid();
  for (auto& t : r.terms) {
    t.c *= lead;
    t.e += alpha * e0;
  }
  r.rem += alpha * e0;
  normalize(r);
  return r;
}

inline Series exp_series(const Series& a) {
  if (!a.ok) return Series::invalid();
  double c = 0.0;
  Series u;
  u.rem = a.rem;
  for (auto t : a.terms) {
    if (t.e < -kExpTol) return Series::invalid();  // unbounded exponent
    if (std::fabs(t.e) <= kExpTol)
      c += t.c;
    else
      u.terms.push_back(t);
  }
  if (!(u.rem > 0.0)) return Series::invalid();
  normalize(u);
  double lead = std::exp(c);
  if (!std::isfinite(lead) || lead == 0.0) return Series::invalid();
  if (u.exact_zero()) return Series::constant(lead);
  std::size_t n = series_order(u);
  if (n == 0) return Series::invalid();
  std::vector<double> fk(n, 1.0);
  for (std::size_t k = 1; k < n; ++k) fk[k] = fk[k - 1] / k;
  return scale(compose_power_series(u, fk), lead);
}

inline Series log_series(const Series& a) {
  if (!a.ok || a.terms.empty()) return Series::invalid();
  double c0 = a.terms.front().c, e0 = a.terms.front().e;
  if (c0 <= 0.0 || std::fabs(e0) > kExpTol) return Series::invalid();  // log t terms are not powers
  Series u;
  u.rem = a.rem;
  for (std::size_t i = 1; i < a.terms.size(); ++i) u.terms.push_back({a.terms[i].c / c0, a.terms[i].e});
  normalize(u);
  if (u.exact_zero()) return Series::constant(std::log(c0));
  std::size_t n = series_order(u);
  if (n == 0) return Series::invalid();
  std::vector<double> fk(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) fk[k] = (k % 2 ? 1.0 : -1.0) / static_cast<double>(k);
  return add(Series::constant(std::log(c0)), compose_power_series(u, fk));
}

struct SeriesPoint {
  bool at_infinity;
  double p;
  double dir;  // x = p + dir*t, or x = dir/t at infinity
};

inline Series expand(const Expr& e, const SeriesPoint& pt) {
  switch (e.kind()) {
    case NodeKind::Number: return Series::constant(e.value());
    case NodeKind::Var: {
      Series s;
      if (pt.at_infinity) {
        s.terms.push_back({pt.dir, -1.0});
      } else {
        if (pt.p != 0.0) s.terms.push_back({pt.p, 0.0});
        s.terms.push_back({pt.dir, 1.0});
      }
      return s;
    }
    case NodeKind::Neg: return scale(expand(e.arg(0), pt), -1.0);
    case NodeKind::Add: return add(expand(e.arg(0), pt), expand(e.arg(1), pt));
    case NodeKind::Sub: return add(expand(e.arg(0), pt), expand(e.arg(1), pt), -1.0);
    case NodeKind::Mul: return mul(expand(e.arg(0), pt), expand(e.arg(1), pt));
    case NodeKind::Div: {
      Series d = expand(e.arg(1), pt);
      return mul(expand(e.arg(0), pt), power_series(d, -1.0));
    }
    case NodeKind::Pow:
    case NodeKind::Call: {
      bool is_pow = e.kind() == NodeKind::Pow || e.func() == Func::Pow;
      if (is_pow) {
        Expr k = simplify(e.arg(1));
        if (k.kind() != NodeKind::Number) {
          // a^b = exp(b log a)
          return exp_series(mul(expand(e.arg(1), pt), log_series(expand(e.arg(0), pt))));
        }
        Series a = expand(e.arg(0), pt);
        if (a.exact_zero()) return k.value() > 0.0 ? Series::constant(0.0) : Series::invalid();
        if (k.value() == 0.0) return a.terms.empty() ? Series::invalid() : Series::constant(1.0);
        return power_series(a, k.value());
      }
      Series a = expand(e.arg(0), pt);
      switch (e.func()) {
        case Func::Exp: return exp_series(a);
        case Func::Log: return log_series(a);
        case Func::Sqrt: return power_series(a, 0.5);
        case Func::Abs:
          if (a.exact_zero()) return a;
          if (!a.ok || a.terms.empty()) return Series::invalid();
          return a.terms.front().c < 0.0 ? scale(a, -1.0) : a;
        case Func::Sign:
          if (a.exact_zero()) return a;
          if (!a.ok || a.terms.empty()) return Series::invalid();
          return Series::constant(a.terms.front().c < 0.0 ? -1.0 : 1.0);
        default: return Series::invalid();
      }
    }
  }
  return Series::invalid();
}

}  // namespace detail

/// Exponent q with e ~ C|x-p|^q as x -> p from `side` (C != 0), or with
/// e ~ C|x|^q as x -> +-inf. Empty when the local power cannot be derived.
inline std::optional<double> leading_exponent(const Expr& e, ExtendedReal p, Side side) {
  detail::SeriesPoint pt{};
  if (p.is_finite()) {
    pt = {false, p.value(), side == Side::Right ? 1.0 : -1.0};
  } else {
    pt = {true, 0.0, p.is_pos_inf() ? 1.0 : -1.0};
  }
  detail::Series s;
  try {
    s = detail::expand(e, pt);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!s.ok || s.terms.empty()) return std::nullopt;
  double q = s.terms.front().e;
  if (!std::isfinite(q) || !std::isfinite(s.terms.front().c)) return std::nullopt;
  return pt.at_infinity ? -q : q;
}

}  // namespace gsexp
