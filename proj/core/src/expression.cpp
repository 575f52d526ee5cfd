#include "nedspec/expression.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <vector>

namespace ned {
namespace detail {

enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Ln, Abs };

struct ExprNode {
  Op op;
  double value = 0.0;  // Op::Const only
  std::shared_ptr<const ExprNode> lhs, rhs;
};

using NodePtr = std::shared_ptr<const ExprNode>;

namespace {

NodePtr make(Op op, NodePtr l = nullptr, NodePtr r = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->lhs = std::move(l);
  n->rhs = std::move(r);
  return n;
}

NodePtr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

double eval_node(const ExprNode& n, double t) {
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return t;
    case Op::Add: return eval_node(*n.lhs, t) + eval_node(*n.rhs, t);
    case Op::Sub: return eval_node(*n.lhs, t) - eval_node(*n.rhs, t);
    case Op::Mul: return eval_node(*n.lhs, t) * eval_node(*n.rhs, t);
    case Op::Div: return eval_node(*n.lhs, t) / eval_node(*n.rhs, t);
    case Op::Pow: return std::pow(eval_node(*n.lhs, t), eval_node(*n.rhs, t));
    case Op::Neg: return -eval_node(*n.lhs, t);
    case Op::Sin: return std::sin(eval_node(*n.lhs, t));
    case Op::Cos: return std::cos(eval_node(*n.lhs, t));
    case Op::Exp: return std::exp(eval_node(*n.lhs, t));
    case Op::Ln: return std::log(eval_node(*n.lhs, t));
    case Op::Abs: return std::fabs(eval_node(*n.lhs, t));
  }
  return 0.0;
}

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
  }
}

void print_node(const ExprNode& n, std::ostream& os, int parent_prec) {
  const int prec = precedence(n.op);
  const bool parens = prec < parent_prec;
  if (parens) os << '(';
  switch (n.op) {
    case Op::Const: {
      std::ostringstream tmp;
      tmp.precision(17);
      tmp << n.value;
      std::string s = tmp.str();
      if (n.value < 0) {
        os << '(' << s << ')';
      } else {
        os << s;
      }
      break;
    }
    case Op::Var: os << 't'; break;
    case Op::Add:
      print_node(*n.lhs, os, prec);
      os << " + ";
      print_node(*n.rhs, os, prec + 1);
      break;
    case Op::Sub:
      print_node(*n.lhs, os, prec);
      os << " - ";
      print_node(*n.rhs, os, prec + 1);
      break;
    case Op::Mul:
      print_node(*n.lhs, os, prec);
      os << "*";
      print_node(*n.rhs, os, prec + 1);
      break;
    case Op::Div:
      print_node(*n.lhs, os, prec);
      os << "/";
      print_node(*n.rhs, os, prec + 1);
      break;
    case Op::Pow:
      print_node(*n.lhs, os, prec + 1);
      os << "^";
      print_node(*n.rhs, os, prec);
      break;
    case Op::Neg:
      os << "-";
      print_node(*n.lhs, os, prec + 1);
      break;
    case Op::Sin: os << "sin("; print_node(*n.lhs, os, 0); os << ')'; break;
    case Op::Cos: os << "cos("; print_node(*n.lhs, os, 0); os << ')'; break;
    case Op::Exp: os << "exp("; print_node(*n.lhs, os, 0); os << ')'; break;
    case Op::Ln: os << "ln("; print_node(*n.lhs, os, 0); os << ')'; break;
    case Op::Abs: os << "abs("; print_node(*n.lhs, os, 0); os << ')'; break;
  }
  if (parens) os << ')';
}

class Parser {
public:
  explicit Parser(const std::string& text) : text_(text) {}

  NodePtr run() {
    NodePtr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("expr:" + std::to_string(pos_), msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    for (;;) {
      if (consume('+')) {
        lhs = make(Op::Add, lhs, parse_product());
      } else if (consume('-')) {
        lhs = make(Op::Sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (consume('*')) {
        lhs = make(Op::Mul, lhs, parse_unary());
      } else if (consume('/')) {
        lhs = make(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (consume('-')) return make(Op::Neg, parse_unary());
    if (consume('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (consume('^')) {
      // right associative, and -x^2 parses as -(x^2) via parse_unary
      return make(Op::Pow, base, parse_unary());
    }
    return base;
  }

  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_sum();
      if (!consume(')')) fail("missing ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr parse_number() {
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
      ++pos_;
    }
    try {
      size_t used = 0;
      double v = std::stod(text_.substr(start, pos_ - start), &used);
      if (used != pos_ - start) fail("malformed number");
      return make_const(v);
    } catch (const std::exception&) {
      pos_ = start;
      fail("malformed number");
    }
  }

  NodePtr parse_ident() {
    size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    std::string name = text_.substr(start, pos_ - start);
    if (name == "t") return make(Op::Var);
    if (name == "pi") return make_const(M_PI);
    Op op;
    if (name == "sin") op = Op::Sin;
    else if (name == "cos") op = Op::Cos;
    else if (name == "exp") op = Op::Exp;
    else if (name == "ln" || name == "log") op = Op::Ln;
    else if (name == "abs") op = Op::Abs;
    else {
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    if (!consume('(')) fail("expected '(' after " + name);
    NodePtr arg = parse_sum();
    if (!consume(')')) fail("missing ')'");
    return make(op, arg);
  }

  const std::string& text_;
  size_t pos_ = 0;
};

bool node_is_zero(const ExprNode& n) {
  switch (n.op) {
    case Op::Const: return n.value == 0.0;
    case Op::Neg: return node_is_zero(*n.lhs);
    case Op::Add:
    case Op::Sub: return node_is_zero(*n.lhs) && node_is_zero(*n.rhs);
    case Op::Mul: return node_is_zero(*n.lhs) || node_is_zero(*n.rhs);
    default: return false;
  }
}

}  // namespace
}  // namespace detail

Expr Expr::parse(const std::string& text) {
  return Expr(detail::Parser(text).run());
}

Expr Expr::constant(double c) {
  return Expr(detail::make_const(c));
}

double Expr::eval(double t) const {
  if (!root_) throw Error("expr", "evaluating empty expression");
  return detail::eval_node(*root_, t);
}

std::string Expr::str() const {
  if (!root_) return "";
  std::ostringstream os;
  detail::print_node(*root_, os, 0);
  return os.str();
}

bool Expr::is_zero() const {
  return root_ && detail::node_is_zero(*root_);
}

}  // namespace ned
