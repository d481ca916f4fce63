#include <doctest.h>

#include <cmath>
#include <vector>

#include "twoscale/expression.hpp"

using namespace twoscale;

TEST_SUITE("expression") {
  TEST_CASE("polynomials, functions and constants") {
    const auto e = Expression::compile("m - y + 2*x^2 + exp(0) + sin(0)", 1, 1, {{"m", 0.5}});
    const std::vector<double> x{3.0}, y{1.0};
    CHECK(e.evaluate(x, y) == doctest::Approx(0.5 - 1.0 + 18.0 + 1.0));
    CHECK(e.depends_on_slow());
    CHECK(e.depends_on_fast());
  }

  TEST_CASE("indexed variables") {
    const auto e = Expression::compile("x1*y2 - sqrt(abs(y1))", 2, 2);
    const std::vector<double> x{2.0, 5.0}, y{-4.0, 3.0};
    CHECK(e.evaluate(x, y) == doctest::Approx(2.0 * 3.0 - 2.0));
  }

  TEST_CASE("precedence and unary minus") {
    const auto e = Expression::compile("-y^2 + 2*3 - 4/2", 1, 1);
    const std::vector<double> x{0.0}, y{3.0};
    CHECK(e.evaluate(x, y) == doctest::Approx(-9.0 + 6.0 - 2.0));
  }

  TEST_CASE("zero detection") {
    CHECK(Expression::compile("0", 1, 1).is_zero());
    CHECK_FALSE(Expression::compile("y", 1, 1).is_zero());
  }

  TEST_CASE("errors carry a column") {
    try {
      (void)Expression::compile("y + * 2", 1, 1);
      FAIL("expected an error");
    } catch (const ExpressionError& e) {
      CHECK(e.column() >= 1);
    }
    CHECK_THROWS_AS((void)Expression::compile("z", 1, 1), ExpressionError);
    CHECK_THROWS_AS((void)Expression::compile("y3", 1, 1), ExpressionError);
  }
}
