#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace npc {

class ExprError : public std::invalid_argument {
 public:
  ExprError(const std::string& msg, std::size_t pos);
  std::size_t position;
};

/// Closed field-expression language over x, y, t:
///   expr   := term (('+' | '-') term)*
///   term   := factor ('*' factor)*
///   factor := number | pi | x | y | t | '-' factor | '(' expr ')'
///           | cos(expr) | sin(expr) | gauss(x0, s) | gauss(x0, y0, s)
/// gauss(x0, s) = exp(-(x-x0)^2 / (2 s^2)); the three-argument form is the
/// radial version around (x0, y0). Arguments of gauss are numbers.
class FieldExpr {
 public:
  FieldExpr();  // the constant 0
  static FieldExpr parse(const std::string& text);
  static FieldExpr constant(double c);

  double operator()(double x, double y = 0.0, double t = 0.0) const;
  const std::string& source() const { return source_; }
  bool operator==(const FieldExpr& o) const { return source_ == o.source_; }

  struct Node;

 private:
  std::string source_;
  std::shared_ptr<const Node> root_;
};

}  // namespace npc
