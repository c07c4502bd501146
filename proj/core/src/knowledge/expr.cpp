#include "almanac/knowledge/expr.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace almanac::knowledge {

std::string_view to_string(BinaryOp op) noexcept {
    switch (op) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
        case BinaryOp::Pow: return "^";
        case BinaryOp::Lt: return "<";
        case BinaryOp::Le: return "<=";
        case BinaryOp::Gt: return ">";
        case BinaryOp::Ge: return ">=";
        case BinaryOp::Eq: return "==";
        case BinaryOp::Ne: return "!=";
    }
    return "?";
}

ExprPtr Expr::make_number(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Number;
    e->number = v;
    return e;
}

ExprPtr Expr::make_variable(std::string name) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Variable;
    e->name = std::move(name);
    return e;
}

ExprPtr Expr::make_negate(ExprPtr operand) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Negate;
    e->args = {std::move(operand)};
    return e;
}

ExprPtr Expr::make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Binary;
    e->op = op;
    e->args = {std::move(lhs), std::move(rhs)};
    return e;
}

ExprPtr Expr::make_call(std::string fn, std::vector<ExprPtr> args) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Call;
    e->name = std::move(fn);
    e->args = std::move(args);
    return e;
}

bool equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
    switch (a.kind) {
        case Expr::Kind::Number:
            if (a.number != b.number) return false;
            break;
        case Expr::Kind::Variable:
        case Expr::Kind::Call:
            if (a.name != b.name) return false;
            break;
        case Expr::Kind::Binary:
            if (a.op != b.op) return false;
            break;
        case Expr::Kind::Negate: break;
    }
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!equal(*a.args[i], *b.args[i])) return false;
    }
    return true;
}

const std::map<std::string, int, std::less<>>& expression_functions() {
    static const std::map<std::string, int, std::less<>> fns = {
        {"abs", 1}, {"exp", 1}, {"if", 3},     {"ln", 1},    {"log10", 1},
        {"max", -1}, {"min", -1}, {"round", 1}, {"sqrt", 1},
    };
    return fns;
}

// =============================================================================
// Parser
// =============================================================================

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    ExprPtr parse() {
        auto e = comparison();
        skip_ws();
        if (pos_ < text_.size()) fail("operator or end of expression");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(1, pos_ + 1, expected);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(std::string_view token) {
        skip_ws();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    ExprPtr comparison() {
        auto lhs = additive();
        static constexpr std::pair<std::string_view, BinaryOp> ops[] = {
            {"<=", BinaryOp::Le}, {">=", BinaryOp::Ge}, {"==", BinaryOp::Eq},
            {"!=", BinaryOp::Ne}, {"<", BinaryOp::Lt},  {">", BinaryOp::Gt},
        };
        for (const auto& [tok, op] : ops) {
            if (accept(tok)) return Expr::make_binary(op, lhs, additive());
        }
        return lhs;
    }

    ExprPtr additive() {
        auto lhs = term();
        for (;;) {
            if (accept("+")) {
                lhs = Expr::make_binary(BinaryOp::Add, lhs, term());
            } else if (accept("-")) {
                lhs = Expr::make_binary(BinaryOp::Sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    ExprPtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept("*")) {
                lhs = Expr::make_binary(BinaryOp::Mul, lhs, unary());
            } else if (accept("/")) {
                lhs = Expr::make_binary(BinaryOp::Div, lhs, unary());
            } else {
                return lhs;
            }
        }
    }

    ExprPtr unary() {
        if (accept("-")) return Expr::make_negate(unary());
        return power();
    }

    ExprPtr power() {
        auto base = primary();
        if (accept("^")) return Expr::make_binary(BinaryOp::Pow, base, unary());
        return base;
    }

    ExprPtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("number, name or '('");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = comparison();
            if (!accept(")")) fail("')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
        fail("number, name or '('");
    }

    ExprPtr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_, ++n;
            return n;
        };
        std::size_t n = digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) fail("digits");
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (digits() == 0) fail("exponent digits");
        }
        double v = 0;
        const char* first = text_.data() + start;
        const char* last = text_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
            pos_ = start;
            fail("finite number");
        }
        return Expr::make_number(v);
    }

    ExprPtr name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        std::string id(text_.substr(start, pos_ - start));
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != '(') return Expr::make_variable(std::move(id));

        const auto& fns = expression_functions();
        auto fn = fns.find(id);
        if (fn == fns.end()) {
            pos_ = start;
            fail("known function (abs, exp, if, ln, log10, max, min, round, sqrt)");
        }
        ++pos_;
        std::vector<ExprPtr> args;
        if (!accept(")")) {
            do {
                args.push_back(comparison());
            } while (accept(","));
            if (!accept(")")) fail("',' or ')'");
        }
        const int arity = fn->second;
        if ((arity < 0 && args.empty()) || (arity >= 0 && args.size() != static_cast<std::size_t>(arity))) {
            pos_ = start;
            fail(id + " with " + (arity < 0 ? std::string("at least 1") : std::to_string(arity)) + " argument(s)");
        }
        return Expr::make_call(std::move(id), std::move(args));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

// Binding strength used by the printer: comparison 1, additive 2,
// multiplicative 3, unary 4, power 5, atoms 6.
int precedence(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Number:
        case Expr::Kind::Variable:
        case Expr::Kind::Call: return 6;
        case Expr::Kind::Negate: return 4;
        case Expr::Kind::Binary:
            switch (e.op) {
                case BinaryOp::Add:
                case BinaryOp::Sub: return 2;
                case BinaryOp::Mul:
                case BinaryOp::Div: return 3;
                case BinaryOp::Pow: return 5;
                default: return 1;
            }
    }
    return 6;
}

void print(const Expr& e, int min_prec, std::string& out) {
    const int prec = precedence(e);
    const bool wrap = prec < min_prec;
    if (wrap) out += '(';
    switch (e.kind) {
        case Expr::Kind::Number: out += format_number(e.number); break;
        case Expr::Kind::Variable: out += e.name; break;
        case Expr::Kind::Negate:
            out += '-';
            print(*e.args[0], 4, out);
            break;
        case Expr::Kind::Call:
            out += e.name + "(";
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                if (i) out += ", ";
                print(*e.args[i], 1, out);
            }
            out += ')';
            break;
        case Expr::Kind::Binary:
            if (e.op == BinaryOp::Pow) {
                print(*e.args[0], 6, out);
                out += '^';
                print(*e.args[1], 4, out);
            } else {
                print(*e.args[0], prec == 1 ? 2 : prec, out);
                out += " " + std::string(to_string(e.op)) + " ";
                print(*e.args[1], prec == 1 ? 2 : prec + 1, out);
            }
            break;
    }
    if (wrap) out += ')';
}

void collect(const Expr& e, std::set<std::string>& out) {
    if (e.kind == Expr::Kind::Variable) out.insert(e.name);
    for (const auto& a : e.args) collect(*a, out);
}

[[noreturn]] void eval_fail(const std::string& why) {
    throw Error(Errc::EvaluationError, why);
}

double checked(double v, const char* what) {
    if (!std::isfinite(v)) eval_fail(std::string(what) + " is not finite");
    return v;
}

}  // namespace

ExprPtr parse_expression(std::string_view text) {
    return Parser(text).parse();
}

std::string print_expression(const Expr& e) {
    std::string out;
    print(e, 1, out);
    return out;
}

std::set<std::string> variables(const Expr& e) {
    std::set<std::string> out;
    collect(e, out);
    return out;
}

double evaluate(const Expr& e, const std::map<std::string, double, std::less<>>& env) {
    switch (e.kind) {
        case Expr::Kind::Number: return e.number;
        case Expr::Kind::Variable: {
            auto it = env.find(e.name);
            if (it == env.end()) eval_fail("no value for '" + e.name + "'");
            return it->second;
        }
        case Expr::Kind::Negate: return -evaluate(*e.args[0], env);
        case Expr::Kind::Binary: {
            const double a = evaluate(*e.args[0], env);
            const double b = evaluate(*e.args[1], env);
            switch (e.op) {
                case BinaryOp::Add: return checked(a + b, "sum");
                case BinaryOp::Sub: return checked(a - b, "difference");
                case BinaryOp::Mul: return checked(a * b, "product");
                case BinaryOp::Div:
                    if (b == 0) eval_fail("division by zero");
                    return checked(a / b, "quotient");
                case BinaryOp::Pow: return checked(std::pow(a, b), "power");
                case BinaryOp::Lt: return a < b ? 1 : 0;
                case BinaryOp::Le: return a <= b ? 1 : 0;
                case BinaryOp::Gt: return a > b ? 1 : 0;
                case BinaryOp::Ge: return a >= b ? 1 : 0;
                case BinaryOp::Eq: return a == b ? 1 : 0;
                case BinaryOp::Ne: return a != b ? 1 : 0;
            }
            break;
        }
        case Expr::Kind::Call: {
            if (e.name == "if") return evaluate(*e.args[evaluate(*e.args[0], env) != 0 ? 1 : 2], env);
            std::vector<double> v;
            for (const auto& a : e.args) v.push_back(evaluate(*a, env));
            if (e.name == "min") return *std::min_element(v.begin(), v.end());
            if (e.name == "max") return *std::max_element(v.begin(), v.end());
            if (e.name == "abs") return std::fabs(v[0]);
            if (e.name == "round") return std::round(v[0]);
            if (e.name == "exp") return checked(std::exp(v[0]), "exp");
            if (e.name == "sqrt") {
                if (v[0] < 0) eval_fail("sqrt of a negative number");
                return std::sqrt(v[0]);
            }
            if (e.name == "ln" || e.name == "log10") {
                if (v[0] <= 0) eval_fail(e.name + " of a non-positive number");
                return e.name == "ln" ? std::log(v[0]) : std::log10(v[0]);
            }
            eval_fail("unknown function '" + e.name + "'");
        }
    }
    eval_fail("malformed expression");
}

}  // namespace almanac::knowledge
