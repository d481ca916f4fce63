#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace twoscale {

class ExpressionError : public std::runtime_error {
 public:
  ExpressionError(const std::string& what, std::size_t column)
      : std::runtime_error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Compiled arithmetic expression over slow coordinates x1..xm and fast
/// coordinates y1..yn (x and y alias x1 and y1). Supports + - * / ^,
/// unary minus, numeric literals, named constants, pi, and the functions
/// exp, sin, cos, sqrt, abs. Evaluation is allocation-free and reentrant.
class Expression {
 public:
  Expression() = default;

  static Expression compile(const std::string& source, std::size_t slow_dim, std::size_t fast_dim,
                            const std::map<std::string, double>& constants = {});

  double evaluate(std::span<const double> x, std::span<const double> y) const;

  const std::string& source() const noexcept { return source_; }

  bool depends_on_slow() const noexcept { return uses_slow_; }
  bool depends_on_fast() const noexcept { return uses_fast_; }
  /// True when the expression is a literal zero after constant folding.
  bool is_zero() const noexcept;

  enum class OpCode : unsigned char { constant, slow, fast, add, sub, mul, div, pow, ipow, neg, exp, sin, cos, sqrt, abs };
  struct Instruction {
    OpCode op;
    double value = 0.0;
    int index = 0;
  };

 private:
  std::string source_;
  std::vector<Instruction> program_;
  std::size_t max_stack_ = 0;
  bool uses_slow_ = false;
  bool uses_fast_ = false;

  friend class ExpressionParser;
};

}  // namespace twoscale
