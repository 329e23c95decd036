#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cycle {

// Straight-line integer language: zero or more assignments followed by a
// single return expression. Inputs are x, y, z (by arity); temporaries t0..t3.

enum class ErrorKind {
    None,
    Syntax,
    DivByZero,
    Overflow,
    UnboundIdentifier,
    StepLimitExceeded,
};

const char* error_kind_name(ErrorKind kind);

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
    enum class Kind { Literal, Var, Binary, Call };

    Kind kind;
    std::int64_t literal = 0;   // Literal
    std::string name;           // Var or Call callee
    char op = 0;                // Binary: one of + - * /
    std::vector<ExprPtr> args;  // Binary operands or Call arguments
};

struct Program {
    std::vector<std::pair<std::string, ExprPtr>> assignments;
    ExprPtr return_expr;
    std::string source;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, int line, int column)
        : std::runtime_error(std::move(message)), line(line), column(column) {}

    int line;
    int column;
};

Program parse(const std::string& source);

// Canonical rendering of the AST; render(parse(s)) reparses to an equal AST.
std::string render(const Program& program);
bool ast_equal(const Program& a, const Program& b);

struct ExecResult {
    bool ok = false;
    std::int64_t value = 0;
    ErrorKind error = ErrorKind::None;
    std::int64_t steps_used = 0;
};

inline constexpr std::int64_t kDefaultStepLimit = 10'000;

// Deterministic tree-walk evaluation; every AST node costs one step.
ExecResult execute(const Program& program, const std::vector<std::int64_t>& inputs,
                   std::int64_t step_limit = kDefaultStepLimit);

struct TestCase {
    std::vector<std::int64_t> inputs;
    std::int64_t expected = 0;
};

enum class CaseStatus { Pass, Fail, Error };

struct CaseOutcome {
    int case_index = 0;  // 0-based
    CaseStatus status = CaseStatus::Error;
    std::int64_t actual = 0;      // valid when status != Error
    ErrorKind error = ErrorKind::None;
    std::int64_t steps_used = 0;
};

struct SuiteReport {
    std::vector<CaseOutcome> outcomes;
    bool all_pass = false;
};

SuiteReport run_tests(const std::string& source, const std::vector<TestCase>& suite,
                      std::int64_t step_limit = kDefaultStepLimit);

// Bit-exact feedback text: "ALL TESTS PASSED" or a FAILED header followed by
// at most max_cases failed/errored case lines. LF endings, no trailing newline.
std::string render_feedback(const SuiteReport& report, const std::vector<TestCase>& suite,
                            int max_cases = 3);

}  // namespace cycle
