#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::knowledge {

enum class BinaryOp { Add, Sub, Mul, Div, Pow, Lt, Le, Gt, Ge, Eq, Ne };

std::string_view to_string(BinaryOp op) noexcept;

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Arithmetic expression tree. Comparisons evaluate to 1 or 0.
struct Expr {
    enum class Kind { Number, Variable, Negate, Binary, Call };

    Kind kind = Kind::Number;
    double number = 0;      ///< Number
    std::string name;       ///< Variable name or Call function
    BinaryOp op = BinaryOp::Add;
    std::vector<ExprPtr> args;  ///< Negate: 1, Binary: 2, Call: arity

    static ExprPtr make_number(double v);
    static ExprPtr make_variable(std::string name);
    static ExprPtr make_negate(ExprPtr operand);
    static ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
    static ExprPtr make_call(std::string fn, std::vector<ExprPtr> args);
};

/// Structural equality.
bool equal(const Expr& a, const Expr& b);

/// Built-in functions and their arity (-1 means one or more).
const std::map<std::string, int, std::less<>>& expression_functions();

/**
 * @brief Parses an expression. Throws SyntaxError (line 1, 1-based column).
 *
 * Grammar, loosest first: one optional comparison (< <= > >= == !=), then
 * + -, then * /, then unary minus, then right-associative ^. Calls:
 * if(c, a, b), min, max, abs, sqrt, ln, exp, log10, round.
 */
ExprPtr parse_expression(std::string_view text);

/// Minimal-parenthesis rendering; parse_expression(print_expression(e)) is equal to e
/// for every tree the parser can produce.
std::string print_expression(const Expr& e);

/// Free variables in name order.
std::set<std::string> variables(const Expr& e);

/// Throws EvaluationError for unknown variables, division by zero, domain
/// errors and non-finite results. `if` evaluates only the taken branch.
double evaluate(const Expr& e, const std::map<std::string, double, std::less<>>& env);

}  // namespace almanac::knowledge
