#include "mulab/expression.hpp"

#include "mulab/errors.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace mulab {

namespace {

using Fn = Expression::Fn;
using Env = Expression::Env;

class Parser {
public:
    Parser(const std::string& text, const std::string& field) : s_(text), field_(field) {}

    Fn run() {
        Fn f = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return f;
    }

    bool used_dlogmu() const { return dl_; }

private:
    // sum := product (('+' | '-') product)*
    Fn sum() {
        Fn acc = product();
        for (;;) {
            if (eat('+')) {
                acc = [a = acc, b = product()](const Env& e) { return a(e) + b(e); };
            } else if (eat('-')) {
                acc = [a = acc, b = product()](const Env& e) { return a(e) - b(e); };
            } else {
                return acc;
            }
        }
    }

    // product := unary (('*' | '/') unary)*
    Fn product() {
        Fn acc = unary();
        for (;;) {
            if (eat('*')) {
                acc = [a = acc, b = unary()](const Env& e) { return a(e) * b(e); };
            } else if (eat('/')) {
                acc = [a = acc, b = unary()](const Env& e) { return a(e) / b(e); };
            } else {
                return acc;
            }
        }
    }

    // unary := '-' unary | power; so -x^2 = -(x^2)
    Fn unary() {
        if (eat('-')) return [a = unary()](const Env& e) { return -a(e); };
        if (eat('+')) return unary();
        return power();
    }

    // power := atom ('^' unary)?, right associative
    Fn power() {
        Fn base = atom();
        if (eat('^')) return [a = base, b = unary()](const Env& e) { return std::pow(a(e), b(e)); };
        return base;
    }

    Fn atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        if (eat('(')) {
            Fn inner = sum();
            if (!eat(')')) fail("missing ')'");
            return inner;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos_ += static_cast<std::size_t>(end - begin);
            return [v](const Env&) { return v; };
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            const std::string name = s_.substr(start, pos_ - start);
            if (name == "t") return [](const Env& e) { return e.t; };
            if (name == "dlogmu") {
                dl_ = true;
                return [](const Env& e) { return e.g->log_deriv(e.t); };
            }
            double (*fn)(double) = nullptr;
            if (name == "sin") fn = [](double x) { return std::sin(x); };
            if (name == "cos") fn = [](double x) { return std::cos(x); };
            if (name == "exp") fn = [](double x) { return std::exp(x); };
            if (!fn) {
                pos_ = start;
                fail("unknown name '" + name + "'");
            }
            if (!eat('(')) fail("'" + name + "' needs an argument in parentheses");
            Fn arg = sum();
            if (!eat(')')) fail("missing ')'");
            return [fn, a = arg](const Env& e) { return fn(a(e)); };
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(field_, what + " at column " + std::to_string(pos_ + 1) + " of \"" + s_ + "\"");
    }

    const std::string& s_;
    const std::string& field_;
    std::size_t pos_ = 0;
    bool dl_ = false;
};

} // namespace

Expression Expression::parse(const std::string& text, const std::string& field) {
    Parser p(text, field);
    Fn fn = p.run();
    return Expression(text, std::move(fn), p.used_dlogmu());
}

Expression Expression::constant(double v) {
    return Expression(std::to_string(v), [v](const Env&) { return v; }, false);
}

double Expression::operator()(double t, const GrowthRate& g) const { return fn_(Env{t, &g}); }

} // namespace mulab
