#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace ned {

/// Error raised by any toolkit operation. `where` carries the failing stage
/// or, for parse errors, the character position.
class Error : public std::runtime_error {
public:
  Error(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

private:
  std::string where_;
};

namespace detail {
struct ExprNode;
}

/// A scalar expression in the single variable t.
///
/// Grammar: constants, t, + - * /, unary -, ^ (right associative),
/// sin, cos, exp, ln, abs. Immutable after parse; evaluation is pure.
class Expr {
public:
  Expr() = default;

  /// Parses `text`. Throws ned::Error with the character position on
  /// syntax errors or unknown identifiers.
  static Expr parse(const std::string& text);

  /// Convenience: the constant expression c.
  static Expr constant(double c);

  double eval(double t) const;

  /// Round-trippable text form: parse(str()) evaluates identically.
  std::string str() const;

  /// True if the expression is syntactically the constant 0 after
  /// constant folding (used to detect block structure).
  bool is_zero() const;

  bool valid() const { return root_ != nullptr; }

private:
  explicit Expr(std::shared_ptr<const detail::ExprNode> root) : root_(std::move(root)) {}
  std::shared_ptr<const detail::ExprNode> root_;
};

}  // namespace ned
