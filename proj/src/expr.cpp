#include "npc/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace npc {

ExprError::ExprError(const std::string& msg, std::size_t pos)
    : std::invalid_argument(msg + " at column " + std::to_string(pos + 1)), position(pos) {}

struct FieldExpr::Node {
  enum class Op { num, x, y, t, add, sub, mul, neg, cos, sin, gauss1, gauss2 } op = Op::num;
  double value = 0.0;
  std::vector<double> params;
  std::shared_ptr<const Node> a, b;

  double eval(double x, double y, double t) const {
    switch (op) {
      case Op::num: return value;
      case Op::x: return x;
      case Op::y: return y;
      case Op::t: return t;
      case Op::add: return a->eval(x, y, t) + b->eval(x, y, t);
      case Op::sub: return a->eval(x, y, t) - b->eval(x, y, t);
      case Op::mul: return a->eval(x, y, t) * b->eval(x, y, t);
      case Op::neg: return -a->eval(x, y, t);
      case Op::cos: return std::cos(a->eval(x, y, t));
      case Op::sin: return std::sin(a->eval(x, y, t));
      case Op::gauss1: {
        const double d = x - params[0];
        return std::exp(-d * d / (2.0 * params[1] * params[1]));
      }
      case Op::gauss2: {
        const double dx = x - params[0], dy = y - params[1];
        return std::exp(-(dx * dx + dy * dy) / (2.0 * params[2] * params[2]));
      }
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const FieldExpr::Node>;
using Op = FieldExpr::Node::Op;

NodePtr make(Op op, NodePtr a = {}, NodePtr b = {}) {
  auto n = std::make_shared<FieldExpr::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr number(double v) {
  auto n = std::make_shared<FieldExpr::Node>();
  n->value = v;
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) throw ExprError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) throw ExprError(std::string("expected '") + c + "'", pos_);
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Op::add, lhs, term());
      } else if (accept('-')) {
        lhs = make(Op::sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    while (accept('*')) lhs = make(Op::mul, lhs, factor());
    return lhs;
  }

  double literal() {
    skip();
    bool neg = accept('-');
    skip();
    double v = 0.0;
    const char* begin = s_.data() + pos_;
    auto [ptr, ec] = std::from_chars(begin, s_.data() + s_.size(), v);
    if (ec != std::errc() || ptr == begin) throw ExprError("expected a number", pos_);
    pos_ += static_cast<std::size_t>(ptr - begin);
    return neg ? -v : v;
  }

  NodePtr factor() {
    skip();
    if (pos_ >= s_.size()) throw ExprError("unexpected end of expression", pos_);
    const char c = s_[pos_];
    if (c == '-') {
      ++pos_;
      return make(Op::neg, factor());
    }
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number(literal());
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string word = s_.substr(start, pos_ - start);
      if (word == "pi") return number(std::numbers::pi);
      if (word == "x") return make(Op::x);
      if (word == "y") return make(Op::y);
      if (word == "t") return make(Op::t);
      if (word == "cos" || word == "sin") {
        expect('(');
        NodePtr arg = expr();
        expect(')');
        return make(word == "cos" ? Op::cos : Op::sin, arg);
      }
      if (word == "gauss") {
        expect('(');
        std::vector<double> p{literal()};
        while (accept(',')) p.push_back(literal());
        expect(')');
        if (p.size() != 2 && p.size() != 3) throw ExprError("gauss takes 2 or 3 arguments", start);
        if (!(p.back() > 0.0)) throw ExprError("gauss width must be positive", start);
        auto n = std::make_shared<FieldExpr::Node>();
        n->op = p.size() == 2 ? Op::gauss1 : Op::gauss2;
        n->params = std::move(p);
        return n;
      }
      throw ExprError("unknown identifier '" + word + "'", start);
    }
    throw ExprError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

FieldExpr::FieldExpr() : source_("0"), root_(number(0.0)) {}

FieldExpr FieldExpr::parse(const std::string& text) {
  FieldExpr e;
  e.root_ = Parser(text).parse();
  e.source_ = text;
  return e;
}

FieldExpr FieldExpr::constant(double c) {
  std::ostringstream os;
  os.precision(17);
  os << c;
  return parse(os.str());
}

double FieldExpr::operator()(double x, double y, double t) const { return root_->eval(x, y, t); }

}  // namespace npc
