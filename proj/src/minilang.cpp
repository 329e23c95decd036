#include "cycle/minilang.hpp"

#include <cctype>
#include <map>
#include <sstream>

namespace cycle {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::None: return "None";
        case ErrorKind::Syntax: return "Syntax";
        case ErrorKind::DivByZero: return "DivByZero";
        case ErrorKind::Overflow: return "Overflow";
        case ErrorKind::UnboundIdentifier: return "UnboundIdentifier";
        case ErrorKind::StepLimitExceeded: return "StepLimitExceeded";
    }
    return "None";
}

namespace {

struct Token {
    enum class Kind { Int, Ident, Op, LParen, RParen, Comma, Assign, Newline, End };
    Kind kind;
    std::string text;
    std::int64_t value = 0;
    int line = 1;
    int column = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) {}

    Token next() {
        skip_spaces();
        Token tok;
        tok.line = line_;
        tok.column = column_;
        if (pos_ >= src_.size()) {
            tok.kind = Token::Kind::End;
            return tok;
        }
        char c = src_[pos_];
        if (c == '\n') {
            advance();
            tok.kind = Token::Kind::Newline;
            tok.text = "\n";
            return tok;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::uint64_t v = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                v = v * 10 + static_cast<std::uint64_t>(src_[pos_] - '0');
                if (v > static_cast<std::uint64_t>(INT64_MAX)) {
                    throw ParseError("integer literal out of range", tok.line, tok.column);
                }
                tok.text.push_back(src_[pos_]);
                advance();
            }
            tok.kind = Token::Kind::Int;
            tok.value = static_cast<std::int64_t>(v);
            return tok;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                tok.text.push_back(src_[pos_]);
                advance();
            }
            tok.kind = Token::Kind::Ident;
            return tok;
        }
        advance();
        tok.text = std::string(1, c);
        switch (c) {
            case '+': case '-': case '*': case '/':
                tok.kind = Token::Kind::Op;
                return tok;
            case '(': tok.kind = Token::Kind::LParen; return tok;
            case ')': tok.kind = Token::Kind::RParen; return tok;
            case ',': tok.kind = Token::Kind::Comma; return tok;
            case '=': tok.kind = Token::Kind::Assign; return tok;
            default:
                throw ParseError("unexpected character '" + tok.text + "'", tok.line, tok.column);
        }
    }

private:
    void skip_spaces() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r')) {
            advance();
        }
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
};

int builtin_arity(const std::string& name) {
    if (name == "abs") return 1;
    if (name == "max" || name == "min" || name == "lt" || name == "eq") return 2;
    if (name == "ite") return 3;
    return -1;
}

class Parser {
public:
    explicit Parser(const std::string& src) : lexer_(src) { bump(); }

    Program parse_program(const std::string& source) {
        Program prog;
        prog.source = source;
        skip_newlines();
        while (cur_.kind == Token::Kind::Ident && cur_.text != "return") {
            std::string name = cur_.text;
            if (builtin_arity(name) >= 0) {
                throw ParseError("cannot assign to builtin '" + name + "'", cur_.line, cur_.column);
            }
            bump();
            expect(Token::Kind::Assign, "'='");
            ExprPtr value = parse_expr();
            prog.assignments.emplace_back(std::move(name), std::move(value));
            if (cur_.kind != Token::Kind::Newline) {
                throw ParseError("expected newline after assignment", cur_.line, cur_.column);
            }
            skip_newlines();
        }
        if (cur_.kind != Token::Kind::Ident || cur_.text != "return") {
            throw ParseError("expected 'return'", cur_.line, cur_.column);
        }
        bump();
        prog.return_expr = parse_expr();
        skip_newlines();
        if (cur_.kind != Token::Kind::End) {
            throw ParseError("unexpected trailing input", cur_.line, cur_.column);
        }
        return prog;
    }

private:
    void bump() { cur_ = lexer_.next(); }

    void skip_newlines() {
        while (cur_.kind == Token::Kind::Newline) bump();
    }

    void expect(Token::Kind kind, const char* what) {
        if (cur_.kind != kind) {
            throw ParseError(std::string("expected ") + what, cur_.line, cur_.column);
        }
        bump();
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        while (cur_.kind == Token::Kind::Op && (cur_.text == "+" || cur_.text == "-")) {
            char op = cur_.text[0];
            bump();
            ExprPtr rhs = parse_term();
            lhs = make_binary(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_atom();
        while (cur_.kind == Token::Kind::Op && (cur_.text == "*" || cur_.text == "/")) {
            char op = cur_.text[0];
            bump();
            ExprPtr rhs = parse_atom();
            lhs = make_binary(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprPtr parse_atom() {
        if (cur_.kind == Token::Kind::Int) {
            auto e = std::make_unique<Expr>();
            e->kind = Expr::Kind::Literal;
            e->literal = cur_.value;
            bump();
            return e;
        }
        if (cur_.kind == Token::Kind::Op && cur_.text == "-") {
            // Unary minus: represented as 0 - atom.
            int line = cur_.line, column = cur_.column;
            bump();
            if (cur_.kind == Token::Kind::Int) {
                auto e = std::make_unique<Expr>();
                e->kind = Expr::Kind::Literal;
                if (cur_.value == INT64_MAX) {
                    throw ParseError("integer literal out of range", line, column);
                }
                e->literal = -cur_.value;
                bump();
                return e;
            }
            auto zero = std::make_unique<Expr>();
            zero->kind = Expr::Kind::Literal;
            zero->literal = 0;
            return make_binary('-', std::move(zero), parse_atom());
        }
        if (cur_.kind == Token::Kind::LParen) {
            bump();
            ExprPtr inner = parse_expr();
            expect(Token::Kind::RParen, "')'");
            return inner;
        }
        if (cur_.kind == Token::Kind::Ident) {
            std::string name = cur_.text;
            if (name == "return") {
                throw ParseError("unexpected 'return' in expression", cur_.line, cur_.column);
            }
            int line = cur_.line, column = cur_.column;
            bump();
            if (cur_.kind == Token::Kind::LParen) {
                int arity = builtin_arity(name);
                if (arity < 0) {
                    throw ParseError("unknown function '" + name + "'", line, column);
                }
                bump();
                auto call = std::make_unique<Expr>();
                call->kind = Expr::Kind::Call;
                call->name = name;
                if (cur_.kind != Token::Kind::RParen) {
                    call->args.push_back(parse_expr());
                    while (cur_.kind == Token::Kind::Comma) {
                        bump();
                        call->args.push_back(parse_expr());
                    }
                }
                expect(Token::Kind::RParen, "')'");
                if (static_cast<int>(call->args.size()) != arity) {
                    throw ParseError("function '" + name + "' expects " + std::to_string(arity) +
                                         " arguments",
                                     line, column);
                }
                return call;
            }
            auto var = std::make_unique<Expr>();
            var->kind = Expr::Kind::Var;
            var->name = name;
            return var;
        }
        throw ParseError("expected expression", cur_.line, cur_.column);
    }

    static ExprPtr make_binary(char op, ExprPtr lhs, ExprPtr rhs) {
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::Binary;
        e->op = op;
        e->args.push_back(std::move(lhs));
        e->args.push_back(std::move(rhs));
        return e;
    }

    Lexer lexer_;
    Token cur_;
};

void render_expr(const Expr& e, std::ostringstream& out, int parent_prec) {
    switch (e.kind) {
        case Expr::Kind::Literal:
            out << e.literal;
            break;
        case Expr::Kind::Var:
            out << e.name;
            break;
        case Expr::Kind::Binary: {
            int prec = (e.op == '+' || e.op == '-') ? 1 : 2;
            bool need_parens = prec < parent_prec;
            if (need_parens) out << '(';
            render_expr(*e.args[0], out, prec);
            out << ' ' << e.op << ' ';
            // Right operand gets tighter precedence so non-associative cases re-parenthesize.
            render_expr(*e.args[1], out, prec + 1);
            if (need_parens) out << ')';
            break;
        }
        case Expr::Kind::Call: {
            out << e.name << '(';
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                if (i) out << ", ";
                render_expr(*e.args[i], out, 0);
            }
            out << ')';
            break;
        }
    }
}

bool expr_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Expr::Kind::Literal: return a.literal == b.literal;
        case Expr::Kind::Var: return a.name == b.name;
        case Expr::Kind::Binary:
            if (a.op != b.op) return false;
            break;
        case Expr::Kind::Call:
            if (a.name != b.name) return false;
            break;
    }
    if (a.args.size() != b.args.size()) return false;
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!expr_equal(*a.args[i], *b.args[i])) return false;
    }
    return true;
}

class ExecError {
public:
    explicit ExecError(ErrorKind kind) : kind(kind) {}
    ErrorKind kind;
};

struct Evaluator {
    const std::map<std::string, std::int64_t>& env;
    std::int64_t step_limit;
    std::int64_t steps = 0;

    std::int64_t eval(const Expr& e) {
        if (++steps > step_limit) throw ExecError(ErrorKind::StepLimitExceeded);
        switch (e.kind) {
            case Expr::Kind::Literal:
                return e.literal;
            case Expr::Kind::Var: {
                auto it = env.find(e.name);
                if (it == env.end()) throw ExecError(ErrorKind::UnboundIdentifier);
                return it->second;
            }
            case Expr::Kind::Binary: {
                std::int64_t a = eval(*e.args[0]);
                std::int64_t b = eval(*e.args[1]);
                std::int64_t r = 0;
                switch (e.op) {
                    case '+':
                        if (__builtin_add_overflow(a, b, &r)) throw ExecError(ErrorKind::Overflow);
                        return r;
                    case '-':
                        if (__builtin_sub_overflow(a, b, &r)) throw ExecError(ErrorKind::Overflow);
                        return r;
                    case '*':
                        if (__builtin_mul_overflow(a, b, &r)) throw ExecError(ErrorKind::Overflow);
                        return r;
                    case '/':
                        if (b == 0) throw ExecError(ErrorKind::DivByZero);
                        if (a == INT64_MIN && b == -1) throw ExecError(ErrorKind::Overflow);
                        return a / b;  // truncates toward zero
                }
                throw ExecError(ErrorKind::Syntax);
            }
            case Expr::Kind::Call: {
                if (e.name == "abs") {
                    std::int64_t a = eval(*e.args[0]);
                    if (a == INT64_MIN) throw ExecError(ErrorKind::Overflow);
                    return a < 0 ? -a : a;
                }
                std::int64_t a = eval(*e.args[0]);
                std::int64_t b = eval(*e.args[1]);
                if (e.name == "max") return a > b ? a : b;
                if (e.name == "min") return a < b ? a : b;
                if (e.name == "lt") return a < b ? 1 : 0;
                if (e.name == "eq") return a == b ? 1 : 0;
                if (e.name == "ite") {
                    // ite is strict: all three arguments are evaluated, so the
                    // step count does not depend on the condition value.
                    std::int64_t c = eval(*e.args[2]);
                    return a != 0 ? b : c;
                }
                throw ExecError(ErrorKind::UnboundIdentifier);
            }
        }
        throw ExecError(ErrorKind::Syntax);
    }
};

}  // namespace

Program parse(const std::string& source) {
    Parser parser(source);
    return parser.parse_program(source);
}

std::string render(const Program& program) {
    std::ostringstream out;
    for (const auto& [name, value] : program.assignments) {
        out << name << " = ";
        render_expr(*value, out, 0);
        out << '\n';
    }
    out << "return ";
    render_expr(*program.return_expr, out, 0);
    return out.str();
}

bool ast_equal(const Program& a, const Program& b) {
    if (a.assignments.size() != b.assignments.size()) return false;
    for (std::size_t i = 0; i < a.assignments.size(); ++i) {
        if (a.assignments[i].first != b.assignments[i].first) return false;
        if (!expr_equal(*a.assignments[i].second, *b.assignments[i].second)) return false;
    }
    return expr_equal(*a.return_expr, *b.return_expr);
}

ExecResult execute(const Program& program, const std::vector<std::int64_t>& inputs,
                   std::int64_t step_limit) {
    static const char* kInputNames[3] = {"x", "y", "z"};
    std::map<std::string, std::int64_t> env;
    for (std::size_t i = 0; i < inputs.size() && i < 3; ++i) {
        env[kInputNames[i]] = inputs[i];
    }
    ExecResult result;
    Evaluator ev{env, step_limit};
    try {
        for (const auto& [name, value] : program.assignments) {
            env[name] = ev.eval(*value);
        }
        result.value = ev.eval(*program.return_expr);
        result.ok = true;
    } catch (const ExecError& err) {
        result.ok = false;
        result.error = err.kind;
    }
    result.steps_used = ev.steps > step_limit ? step_limit : ev.steps;
    return result;
}

SuiteReport run_tests(const std::string& source, const std::vector<TestCase>& suite,
                      std::int64_t step_limit) {
    SuiteReport report;
    report.outcomes.reserve(suite.size());
    bool parsed = false;
    Program program;
    try {
        program = parse(source);
        parsed = true;
    } catch (const ParseError&) {
    }
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CaseOutcome outcome;
        outcome.case_index = static_cast<int>(i);
        if (!parsed) {
            outcome.status = CaseStatus::Error;
            outcome.error = ErrorKind::Syntax;
        } else {
            ExecResult res = execute(program, suite[i].inputs, step_limit);
            outcome.steps_used = res.steps_used;
            if (res.ok) {
                outcome.actual = res.value;
                outcome.status = res.value == suite[i].expected ? CaseStatus::Pass : CaseStatus::Fail;
            } else {
                outcome.status = CaseStatus::Error;
                outcome.error = res.error;
            }
        }
        report.outcomes.push_back(outcome);
    }
    report.all_pass = true;
    for (const auto& o : report.outcomes) {
        if (o.status != CaseStatus::Pass) report.all_pass = false;
    }
    return report;
}

std::string render_feedback(const SuiteReport& report, const std::vector<TestCase>& suite,
                            int max_cases) {
    if (report.all_pass) return "ALL TESTS PASSED";
    int failed = 0;
    for (const auto& o : report.outcomes) {
        if (o.status != CaseStatus::Pass) ++failed;
    }
    std::ostringstream out;
    out << "FAILED " << failed << '/' << report.outcomes.size() << " TESTS";
    int listed = 0;
    for (const auto& o : report.outcomes) {
        if (o.status == CaseStatus::Pass) continue;
        if (listed >= max_cases) break;
        const TestCase& tc = suite.at(static_cast<std::size_t>(o.case_index));
        out << "\ncase " << (o.case_index + 1) << ": input=(";
        for (std::size_t i = 0; i < tc.inputs.size(); ++i) {
            if (i) out << ", ";
            out << tc.inputs[i];
        }
        out << ") expected=" << tc.expected << " got=";
        if (o.status == CaseStatus::Error) {
            out << "ERROR:" << error_kind_name(o.error);
        } else {
            out << o.actual;
        }
        ++listed;
    }
    return out.str();
}

}  // namespace cycle
