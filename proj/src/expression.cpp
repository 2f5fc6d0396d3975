#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <numbers>

#include "psbfem/error.hpp"
#include "psbfem/inp_io.hpp"

namespace psbfem {

struct Expression::Op {
    enum Kind { Const, X, Y, T, Add, Sub, Mul, Div, Neg, Sin, Cos, Sinh, Cosh, Exp } kind;
    double value = 0.0;
};

namespace {

class ExprParser {
public:
    ExprParser(std::string_view s, std::size_t line, std::size_t col) : s_(s), line_(line), col0_(col) {}

    template <class Program>
    void run(Program& out) {
        skip();
        if (pos_ == s_.size()) fail("empty expression");
        expr(out, 0);
        skip();
        if (pos_ != s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
    }

private:
    static constexpr int max_depth = 200;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col0_ + pos_); }

    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    template <class Program>
    void expr(Program& out, int depth) {
        term(out, depth);
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
                const char c = s_[pos_++];
                term(out, depth);
                out.push_back({c == '+' ? Expression::Op::Add : Expression::Op::Sub});
            } else {
                return;
            }
        }
    }

    template <class Program>
    void term(Program& out, int depth) {
        unary(out, depth);
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
                const char c = s_[pos_++];
                unary(out, depth);
                out.push_back({c == '*' ? Expression::Op::Mul : Expression::Op::Div});
            } else {
                return;
            }
        }
    }

    template <class Program>
    void unary(Program& out, int depth) {
        if (depth > max_depth) fail("expression nested too deeply");
        skip();
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) {
            const char c = s_[pos_++];
            unary(out, depth + 1);
            if (c == '-') out.push_back({Expression::Op::Neg});
            return;
        }
        primary(out, depth);
    }

    template <class Program>
    void primary(Program& out, int depth) {
        skip();
        if (pos_ == s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            expr(out, depth + 1);
            skip();
            if (pos_ == s_.size() || s_[pos_] != ')') fail("expected ')'");
            ++pos_;
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            number(out);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string name(s_.substr(start, pos_ - start));
            for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (name == "x") return out.push_back({Expression::Op::X});
            if (name == "y") return out.push_back({Expression::Op::Y});
            if (name == "t") return out.push_back({Expression::Op::T});
            if (name == "pi") return out.push_back({Expression::Op::Const, std::numbers::pi});
            Expression::Op::Kind fn;
            if (name == "sin") fn = Expression::Op::Sin;
            else if (name == "cos") fn = Expression::Op::Cos;
            else if (name == "sinh") fn = Expression::Op::Sinh;
            else if (name == "cosh") fn = Expression::Op::Cosh;
            else if (name == "exp") fn = Expression::Op::Exp;
            else {
                pos_ = start;
                fail("unknown name '" + name + "'");
            }
            skip();
            if (pos_ == s_.size() || s_[pos_] != '(') fail("expected '(' after " + name);
            ++pos_;
            expr(out, depth + 1);
            skip();
            if (pos_ == s_.size() || s_[pos_] != ')') fail("expected ')'");
            ++pos_;
            out.push_back({fn});
            return;
        }
        fail(std::string("unexpected '") + c + "'");
    }

    template <class Program>
    void number(Program& out) {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
            if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
                pos_ = p;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            }
        }
        double v = 0.0;
        const char* first = s_.data() + start;
        const char* last = s_.data() + pos_;
        const auto r = std::from_chars(first, last, v);
        if (r.ec != std::errc() || r.ptr != last || !std::isfinite(v)) {
            pos_ = start;
            fail("malformed number");
        }
        out.push_back({Expression::Op::Const, v});
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_, col0_;
};

}  // namespace

Expression Expression::parse(std::string_view text, std::size_t line, std::size_t column) {
    auto program = std::make_shared<std::vector<Op>>();
    ExprParser(text, line, column).run(*program);
    Expression e;
    std::size_t sp = 0;
    for (const Op& op : *program) {
        if (op.kind <= Op::T) e.stack_size_ = std::max(e.stack_size_, ++sp);
        else if (op.kind <= Op::Div) --sp;
    }
    e.program_ = std::move(program);
    e.source_ = std::string(text);
    return e;
}

double Expression::operator()(double x, double y, double t) const {
    if (!program_) throw ConfigError("empty expression");
    double small[64] = {};
    std::vector<double> large;
    double* stack = small;
    if (stack_size_ > 64) {
        large.resize(stack_size_);
        stack = large.data();
    }
    std::size_t sp = 0;
    for (const Op& op : *program_) {
        switch (op.kind) {
            case Op::Const: stack[sp++] = op.value; break;
            case Op::X: stack[sp++] = x; break;
            case Op::Y: stack[sp++] = y; break;
            case Op::T: stack[sp++] = t; break;
            case Op::Add: --sp; stack[sp - 1] += stack[sp]; break;
            case Op::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
            case Op::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
            case Op::Div: --sp; stack[sp - 1] /= stack[sp]; break;
            case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
            case Op::Sin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
            case Op::Cos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
            case Op::Sinh: stack[sp - 1] = std::sinh(stack[sp - 1]); break;
            case Op::Cosh: stack[sp - 1] = std::cosh(stack[sp - 1]); break;
            case Op::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
        }
    }
    return stack[0];
}

ScalarField Expression::field() const {
    return [e = *this](double x, double y, double t) { return e(x, y, t); };
}

}  // namespace psbfem
