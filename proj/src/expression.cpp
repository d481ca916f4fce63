#include "twoscale/expression.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace twoscale {

namespace {
constexpr std::size_t kMaxStack = 64;
}

class ExpressionParser {
 public:
  ExpressionParser(const std::string& src, std::size_t slow_dim, std::size_t fast_dim,
                   const std::map<std::string, double>& constants)
      : src_(src), slow_dim_(slow_dim), fast_dim_(fast_dim), constants_(constants) {}

  Expression parse() {
    parse_sum();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    if (out_.program_.empty()) fail("empty expression");
    out_.source_ = src_;
    out_.max_stack_ = simulate_stack();
    if (out_.max_stack_ > kMaxStack) fail("expression too deeply nested");
    return std::move(out_);
  }

 private:
  using Op = Expression::OpCode;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ExpressionError("expression '" + src_ + "' column " + std::to_string(pos_ + 1) + ": " + msg,
                          pos_ + 1);
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  std::vector<Expression::Instruction>& prog() { return out_.program_; }

  bool last_is_constant(std::size_t back) const {
    const auto& p = out_.program_;
    return p.size() > back && p[p.size() - 1 - back].op == Op::constant;
  }

  static double apply_binary(Op op, double a, double b) {
    switch (op) {
      case Op::add: return a + b;
      case Op::sub: return a - b;
      case Op::mul: return a * b;
      case Op::div: return a / b;
      default: return std::pow(a, b);
    }
  }

  void emit_binary(Op op) {
    if (last_is_constant(0) && last_is_constant(1)) {
      const double b = prog().back().value;
      prog().pop_back();
      prog().back().value = apply_binary(op, prog().back().value, b);
      return;
    }
    if (op == Op::pow && last_is_constant(0)) {
      const double e = prog().back().value;
      if (e == std::floor(e) && std::abs(e) <= 16.0) {
        prog().back() = {Op::ipow, 0.0, static_cast<int>(e)};
        return;
      }
    }
    prog().push_back({op});
  }

  void emit_unary(Op op) {
    if (last_is_constant(0)) {
      double& v = prog().back().value;
      switch (op) {
        case Op::neg: v = -v; break;
        case Op::exp: v = std::exp(v); break;
        case Op::sin: v = std::sin(v); break;
        case Op::cos: v = std::cos(v); break;
        case Op::sqrt: v = std::sqrt(v); break;
        default: v = std::abs(v); break;
      }
      return;
    }
    prog().push_back({op});
  }

  void parse_sum() {
    parse_product();
    for (;;) {
      if (accept('+')) {
        parse_product();
        emit_binary(Op::add);
      } else if (accept('-')) {
        parse_product();
        emit_binary(Op::sub);
      } else {
        return;
      }
    }
  }

  void parse_product() {
    parse_unary();
    for (;;) {
      if (accept('*')) {
        parse_unary();
        emit_binary(Op::mul);
      } else if (accept('/')) {
        parse_unary();
        emit_binary(Op::div);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    if (accept('-')) {
      parse_unary();
      emit_unary(Op::neg);
      return;
    }
    if (accept('+')) {
      parse_unary();
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (accept('^')) {
      parse_unary();  // right associative, allows 2^-1
      emit_binary(Op::pow);
    }
  }

  void parse_primary() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      prog().push_back({Op::constant, v});
      return;
    }
    if (accept('(')) {
      parse_sum();
      expect(')');
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name = src_.substr(start, pos_ - start);
      identifier(name, start);
      return;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  void identifier(const std::string& name, std::size_t start) {
    static const std::map<std::string, Op> functions{
        {"exp", Op::exp}, {"sin", Op::sin}, {"cos", Op::cos}, {"sqrt", Op::sqrt}, {"abs", Op::abs}};
    if (auto fn = functions.find(name); fn != functions.end()) {
      expect('(');
      parse_sum();
      expect(')');
      emit_unary(fn->second);
      return;
    }
    if (auto k = constants_.find(name); k != constants_.end()) {
      prog().push_back({Op::constant, k->second});
      return;
    }
    if (name == "pi") {
      prog().push_back({Op::constant, std::numbers::pi});
      return;
    }
    if (name[0] == 'x' || name[0] == 'y') {
      const bool slow = name[0] == 'x';
      const std::size_t dim = slow ? slow_dim_ : fast_dim_;
      std::size_t index = 1;
      if (name.size() > 1) {
        const std::string digits = name.substr(1);
        if (digits.find_first_not_of("0123456789") != std::string::npos) {
          pos_ = start;
          fail("unknown identifier '" + name + "'");
        }
        index = static_cast<std::size_t>(std::stoul(digits));
      }
      if (index < 1 || index > dim) {
        pos_ = start;
        fail("variable '" + name + "' out of range (dimension " + std::to_string(dim) + ")");
      }
      prog().push_back({slow ? Op::slow : Op::fast, 0.0, static_cast<int>(index - 1)});
      (slow ? out_.uses_slow_ : out_.uses_fast_) = true;
      return;
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  std::size_t simulate_stack() const {
    std::size_t depth = 0;
    std::size_t peak = 0;
    for (const auto& ins : out_.program_) {
      switch (ins.op) {
        case Op::constant:
        case Op::slow:
        case Op::fast: ++depth; break;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow: --depth; break;
        default: break;
      }
      peak = std::max(peak, depth);
    }
    return peak;
  }

  const std::string& src_;
  std::size_t slow_dim_;
  std::size_t fast_dim_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
  Expression out_;
};

Expression Expression::compile(const std::string& source, std::size_t slow_dim, std::size_t fast_dim,
                               const std::map<std::string, double>& constants) {
  return ExpressionParser(source, slow_dim, fast_dim, constants).parse();
}

bool Expression::is_zero() const noexcept {
  return program_.size() == 1 && program_[0].op == OpCode::constant && program_[0].value == 0.0;
}

double Expression::evaluate(std::span<const double> x, std::span<const double> y) const {
  std::array<double, kMaxStack> stack;
  std::size_t top = 0;
  for (const auto& ins : program_) {
    switch (ins.op) {
      case OpCode::constant: stack[top++] = ins.value; break;
      case OpCode::slow: stack[top++] = x[static_cast<std::size_t>(ins.index)]; break;
      case OpCode::fast: stack[top++] = y[static_cast<std::size_t>(ins.index)]; break;
      case OpCode::add: --top; stack[top - 1] += stack[top]; break;
      case OpCode::sub: --top; stack[top - 1] -= stack[top]; break;
      case OpCode::mul: --top; stack[top - 1] *= stack[top]; break;
      case OpCode::div: --top; stack[top - 1] /= stack[top]; break;
      case OpCode::pow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
      case OpCode::ipow: {
        const double base = stack[top - 1];
        int e = ins.index;
        const bool invert = e < 0;
        if (invert) e = -e;
        double r = 1.0;
        for (int k = 0; k < e; ++k) r *= base;
        stack[top - 1] = invert ? 1.0 / r : r;
        break;
      }
      case OpCode::neg: stack[top - 1] = -stack[top - 1]; break;
      case OpCode::exp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case OpCode::sin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case OpCode::cos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case OpCode::sqrt: stack[top - 1] = std::sqrt(stack[top - 1]); break;
      case OpCode::abs: stack[top - 1] = std::abs(stack[top - 1]); break;
    }
  }
  return stack[0];
}

}  // namespace twoscale
