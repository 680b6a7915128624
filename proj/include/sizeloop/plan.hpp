#pragma once

#include <memory>
#include <set>

#include "sizeloop/netlist.hpp"

namespace sizeloop {

class PlanError : public std::runtime_error {
public:
    PlanError(const std::string& msg, int line = 0)
        : std::runtime_error(line > 0 ? "plan line " + std::to_string(line) + ": " + msg : msg),
          line(line) {}
    int line;
};

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { Number, Ref, Unary, Binary, Call };
    Kind kind = Kind::Number;
    double number = 0.0;
    std::vector<std::string> path;  // Ref: ["gm1"] or ["calib","M1","mu_cox"]
    char op = 0;                    // Binary: + - * /   Unary: -
    ExprPtr lhs, rhs;
    std::string fn;                 // Call
    std::vector<ExprPtr> args;
    int line = 0;
};

enum class DeviceClass { Independent, Mirror, Matched };

inline const char* to_string(DeviceClass c) {
    switch (c) {
        case DeviceClass::Independent: return "INDEPENDENT";
        case DeviceClass::Mirror: return "MIRROR";
        default: return "MATCHED";
    }
}

struct Classification {
    DeviceClass cls = DeviceClass::Independent;
    std::string ref;  // mirror reference / matched partner
    int line = 0;
};

struct Stmt {
    enum class Kind { Let, If, Length, SizeIndependent, SizeMirror, SetPassive, SetSource, Predict };
    Kind kind = Kind::Let;
    std::string name;  // binding / device / passive / source / metric
    std::string ref;   // mirror reference
    ExprPtr expr;      // value / length / carrying / current
    ExprPtr expr2;     // size independent: vov
    ExprPtr cond_lhs, cond_rhs;
    std::string cond_op;
    std::vector<Stmt> then_body, else_body;
    int line = 0;
};

/// Parsed sizing plan: device classifications plus an ordered program of
/// bindings and classification-aware directives. Predictions are collected
/// in program order and evaluated after the sizing body.
struct SizingPlan {
    std::string name;
    std::string topology;
    std::vector<std::pair<std::string, Classification>> classifications;  // ordered
    std::vector<Stmt> statements;
    std::string source;  // verbatim text, echoed per round

    [[nodiscard]] const Classification* find_class(const std::string& device) const {
        for (const auto& [d, c] : classifications)
            if (d == device) return &c;
        return nullptr;
    }
};

namespace plan_detail {

struct Token {
    enum class Kind { Ident, Number, Punct, End };
    Kind kind = Kind::End;
    std::string text;
    double number = 0.0;
    int line = 0;
};

inline const std::set<std::string>& keywords() {
    static const std::set<std::string> kw = {
        "plan", "for", "classify", "independent", "mirror", "matched", "of", "from",
        "carrying", "length", "let", "if", "else", "size", "set", "predict",
        "current", "vov"};
    return kw;
}

inline bool is_keyword(const Token& t) {
    return t.kind == Token::Kind::Ident && keywords().count(t.text) > 0;
}

inline std::vector<Token> tokenize(const std::string& src) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    int line = 1;
    const std::size_t n = src.size();
    while (i < n) {
        char c = src[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t start = i;
            while (i < n) {
                char d = src[i];
                if (std::isdigit(static_cast<unsigned char>(d)) || d == '.') {
                    ++i;
                } else if ((d == 'e' || d == 'E') && i + 1 < n &&
                           (std::isdigit(static_cast<unsigned char>(src[i + 1])) ||
                            ((src[i + 1] == '+' || src[i + 1] == '-') && i + 2 < n &&
                             std::isdigit(static_cast<unsigned char>(src[i + 2]))))) {
                    i += 2;
                } else if (std::isalpha(static_cast<unsigned char>(d))) {
                    ++i;  // unit suffix
                } else {
                    break;
                }
            }
            std::string text = src.substr(start, i - start);
            auto v = try_parse_value(text);
            if (v) {
                tokens.push_back({Token::Kind::Number, text, *v, line});
                continue;
            }
            // not a number: digit-leading identifiers like "2SMC" are allowed
            if (text.find('.') == std::string::npos) {
                while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_'))
                    ++i;
                tokens.push_back({Token::Kind::Ident, src.substr(start, i - start), 0.0, line});
                continue;
            }
            throw PlanError("malformed number '" + text + "'", line);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = i;
            while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
            tokens.push_back({Token::Kind::Ident, src.substr(start, i - start), 0.0, line});
            continue;
        }
        if (c == '>' || c == '<') {
            std::string p(1, c);
            if (i + 1 < n && src[i + 1] == '=') {
                p += '=';
                ++i;
            }
            tokens.push_back({Token::Kind::Punct, p, 0.0, line});
            ++i;
            continue;
        }
        if (std::string("+-*/(){}=.,").find(c) != std::string::npos) {
            tokens.push_back({Token::Kind::Punct, std::string(1, c), 0.0, line});
            ++i;
            continue;
        }
        throw PlanError(std::string("unexpected character '") + c + "'", line);
    }
    tokens.push_back({Token::Kind::End, "", 0.0, line});
    return tokens;
}

class Parser {
public:
    explicit Parser(const std::string& src) : tokens_(tokenize(src)) { plan_.source = src; }

    SizingPlan parse() {
        expect_keyword("plan");
        plan_.name = expect_ident("plan name");
        expect_keyword("for");
        plan_.topology = upper(expect_ident("topology"));
        while (!at_end()) {
            if (match_keyword("classify")) parse_classify();
            else plan_.statements.push_back(parse_statement(false));
        }
        static_checks();
        return std::move(plan_);
    }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    SizingPlan plan_;

    [[nodiscard]] const Token& peek() const { return tokens_[pos_]; }
    const Token& advance() { return tokens_[pos_++]; }
    [[nodiscard]] bool at_end() const { return peek().kind == Token::Kind::End; }

    bool match_punct(const std::string& p) {
        if (peek().kind == Token::Kind::Punct && peek().text == p) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool match_keyword(const std::string& k) {
        if (peek().kind == Token::Kind::Ident && peek().text == k) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect_punct(const std::string& p) {
        if (!match_punct(p))
            throw PlanError("expected '" + p + "', got '" + peek().text + "'", peek().line);
    }
    void expect_keyword(const std::string& k) {
        if (!match_keyword(k))
            throw PlanError("expected '" + k + "', got '" + peek().text + "'", peek().line);
    }
    std::string expect_ident(const std::string& what) {
        if (peek().kind != Token::Kind::Ident || is_keyword(peek()))
            throw PlanError("expected " + what + ", got '" + peek().text + "'", peek().line);
        return advance().text;
    }
    static std::string upper(std::string s) {
        for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }

    void parse_classify() {
        int line = peek().line;
        std::string device = upper(expect_ident("device name"));
        if (plan_.find_class(device))
            throw PlanError("device '" + device + "' classified twice", line);
        Classification c;
        c.line = line;
        if (match_keyword("independent")) {
            c.cls = DeviceClass::Independent;
        } else if (match_keyword("mirror")) {
            expect_keyword("of");
            c.cls = DeviceClass::Mirror;
            c.ref = upper(expect_ident("mirror reference"));
        } else if (match_keyword("matched")) {
            c.cls = DeviceClass::Matched;
            c.ref = upper(expect_ident("matched partner"));
        } else {
            throw PlanError("expected independent/mirror/matched, got '" + peek().text + "'",
                            peek().line);
        }
        plan_.classifications.emplace_back(device, c);
    }

    Stmt parse_statement(bool inside_if) {
        const Token& t = peek();
        if (match_keyword("let")) return parse_let();
        if (match_keyword("if")) return parse_if();
        if (inside_if)
            throw PlanError("only 'let' and nested 'if' are allowed inside a conditional", t.line);
        if (match_keyword("length")) return parse_length();
        if (match_keyword("size")) return parse_size();
        if (match_keyword("set")) return parse_set();
        if (match_keyword("predict")) return parse_predict();
        throw PlanError("expected a statement, got '" + t.text + "'", t.line);
    }

    Stmt parse_let() {
        Stmt s;
        s.kind = Stmt::Kind::Let;
        s.line = peek().line;
        s.name = expect_ident("binding name");
        expect_punct("=");
        s.expr = parse_expression();
        return s;
    }

    Stmt parse_if() {
        Stmt s;
        s.kind = Stmt::Kind::If;
        s.line = peek().line;
        s.cond_lhs = parse_expression();
        if (peek().kind == Token::Kind::Punct &&
            (peek().text == ">=" || peek().text == "<=" || peek().text == ">" || peek().text == "<"))
            s.cond_op = advance().text;
        else
            throw PlanError("expected a comparison operator, got '" + peek().text + "'",
                            peek().line);
        s.cond_rhs = parse_expression();
        expect_punct("{");
        while (!match_punct("}")) s.then_body.push_back(parse_statement(true));
        if (match_keyword("else")) {
            expect_punct("{");
            while (!match_punct("}")) s.else_body.push_back(parse_statement(true));
        }
        return s;
    }

    Stmt parse_length() {
        Stmt s;
        s.kind = Stmt::Kind::Length;
        s.line = peek().line;
        s.name = upper(expect_ident("device name"));
        expect_punct("=");
        s.expr = parse_expression();
        return s;
    }

    Stmt parse_size() {
        Stmt s;
        s.line = peek().line;
        if (match_keyword("independent")) {
            s.kind = Stmt::Kind::SizeIndependent;
            s.name = upper(expect_ident("device name"));
            expect_keyword("current");
            expect_punct("=");
            s.expr = parse_expression();
            expect_keyword("vov");
            expect_punct("=");
            s.expr2 = parse_expression();
        } else if (match_keyword("mirror")) {
            s.kind = Stmt::Kind::SizeMirror;
            s.name = upper(expect_ident("device name"));
            expect_keyword("from");
            s.ref = upper(expect_ident("reference device"));
            expect_keyword("carrying");
            s.expr = parse_expression();
        } else {
            throw PlanError("expected 'size independent' or 'size mirror', got '" +
                                peek().text + "'",
                            peek().line);
        }
        return s;
    }

    Stmt parse_set() {
        Stmt s;
        s.line = peek().line;
        std::string domain = expect_ident("'passive' or 'source'");
        expect_punct(".");
        s.name = upper(expect_ident("instance name"));
        if (domain == "passive") s.kind = Stmt::Kind::SetPassive;
        else if (domain == "source") s.kind = Stmt::Kind::SetSource;
        else throw PlanError("expected 'set passive.X' or 'set source.X'", s.line);
        expect_punct("=");
        s.expr = parse_expression();
        return s;
    }

    Stmt parse_predict() {
        static const std::set<std::string> metrics = {"av", "gbw", "pm", "sr_pos", "sr_neg",
                                                      "power"};
        Stmt s;
        s.kind = Stmt::Kind::Predict;
        s.line = peek().line;
        s.name = expect_ident("metric name");
        if (!metrics.count(s.name))
            throw PlanError("unknown prediction metric '" + s.name + "'", s.line);
        expect_punct("=");
        s.expr = parse_expression();
        return s;
    }

    ExprPtr parse_expression() { return parse_additive(); }

    ExprPtr make_binary(char op, ExprPtr lhs, ExprPtr rhs) {
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::Binary;
        e->op = op;
        e->lhs = std::move(lhs);
        e->rhs = std::move(rhs);
        e->line = e->lhs->line;
        return e;
    }

    ExprPtr parse_additive() {
        ExprPtr lhs = parse_multiplicative();
        while (peek().kind == Token::Kind::Punct && (peek().text == "+" || peek().text == "-")) {
            char op = advance().text[0];
            lhs = make_binary(op, lhs, parse_multiplicative());
        }
        return lhs;
    }

    ExprPtr parse_multiplicative() {
        ExprPtr lhs = parse_unary();
        while (peek().kind == Token::Kind::Punct && (peek().text == "*" || peek().text == "/")) {
            char op = advance().text[0];
            lhs = make_binary(op, lhs, parse_unary());
        }
        return lhs;
    }

    ExprPtr parse_unary() {
        if (peek().kind == Token::Kind::Punct && peek().text == "-") {
            int line = advance().line;
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Unary;
            e->op = '-';
            e->lhs = parse_unary();
            e->line = line;
            return e;
        }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        const Token& t = peek();
        if (t.kind == Token::Kind::Number) {
            advance();
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Number;
            e->number = t.number;
            e->line = t.line;
            return e;
        }
        if (t.kind == Token::Kind::Punct && t.text == "(") {
            advance();
            ExprPtr inner = parse_expression();
            expect_punct(")");
            return inner;
        }
        if (t.kind == Token::Kind::Ident && !is_keyword(t)) {
            std::string first = advance().text;
            if (peek().kind == Token::Kind::Punct && peek().text == "(") {
                advance();
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::Call;
                e->fn = first;
                e->line = t.line;
                if (!match_punct(")")) {
                    while (true) {
                        e->args.push_back(parse_expression());
                        if (match_punct(")")) break;
                        expect_punct(",");
                    }
                }
                return e;
            }
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Ref;
            e->line = t.line;
            e->path.push_back(first);
            while (peek().kind == Token::Kind::Punct && peek().text == ".") {
                advance();
                if (peek().kind != Token::Kind::Ident)
                    throw PlanError("expected a name after '.'", peek().line);
                e->path.push_back(advance().text);
            }
            if (e->path.size() > 1 && (e->path[0] == "calib" || e->path[0] == "dev"))
                e->path[1] = upper(e->path[1]);  // device names are case-insensitive
            return e;
        }
        throw PlanError("expected an expression, got '" + t.text + "'", t.line);
    }

    // --- static validation: single assignment, use-before-bind, directive /
    // classification agreement, mirror acyclicity ---

    void check_expr(const Expr& e, const std::set<std::string>& bound,
                    const std::set<std::string>& sized) const {
        switch (e.kind) {
            case Expr::Kind::Number:
                return;
            case Expr::Kind::Unary:
                check_expr(*e.lhs, bound, sized);
                return;
            case Expr::Kind::Binary:
                check_expr(*e.lhs, bound, sized);
                check_expr(*e.rhs, bound, sized);
                return;
            case Expr::Kind::Call: {
                static const std::set<std::string> fns = {"sqrt", "min", "max", "abs",
                                                          "atan", "log10", "parallel"};
                if (!fns.count(e.fn))
                    throw PlanError("unknown function '" + e.fn + "'", e.line);
                for (const auto& a : e.args) check_expr(*a, bound, sized);
                return;
            }
            case Expr::Kind::Ref: {
                if (e.path.size() == 1) {
                    if (e.path[0] == "pi") return;
                    if (!bound.count(e.path[0]))
                        throw PlanError("circular or unbound reference '" + e.path[0] +
                                            "': names must be bound before use",
                                        e.line);
                    return;
                }
                const std::string& head = e.path[0];
                if (head == "calib") {
                    static const std::set<std::string> params = {"mu_cox", "a_gm", "lambda", "vth"};
                    if (e.path.size() != 3 || !params.count(e.path[2]))
                        throw PlanError("calibration access must be calib.<device>.{mu_cox,a_gm,lambda,vth}",
                                        e.line);
                } else if (head == "target") {
                    static const std::set<std::string> fields = {"av", "gbw", "pm", "sr",
                                                                 "power", "cl"};
                    if (e.path.size() != 2 || !fields.count(e.path[1]))
                        throw PlanError("target access must be target.{av,gbw,pm,sr,power,cl}",
                                        e.line);
                } else if (head == "supply") {
                    if (e.path.size() != 2 || (e.path[1] != "vdd" && e.path[1] != "vss"))
                        throw PlanError("supply access must be supply.vdd or supply.vss", e.line);
                } else if (head == "dev") {
                    if (e.path.size() != 3 || (e.path[2] != "w" && e.path[2] != "l"))
                        throw PlanError("device access must be dev.<device>.{w,l}", e.line);
                    if (!sized.count(e.path[1]))
                        throw PlanError("device '" + e.path[1] +
                                            "' is read before it is sized (circular reference)",
                                        e.line);
                } else {
                    throw PlanError("unknown accessor '" + head + "'", e.line);
                }
                return;
            }
        }
    }

    void check_body(const std::vector<Stmt>& body, std::set<std::string>& bound,
                    std::set<std::string>& sized, std::set<std::string>& lengthed,
                    std::set<std::string>& directive_seen, std::set<std::string>& predicted) {
        for (const auto& s : body) {
            switch (s.kind) {
                case Stmt::Kind::Let:
                    check_expr(*s.expr, bound, sized);
                    if (bound.count(s.name) || s.name == "pi")
                        throw PlanError("name '" + s.name + "' is bound twice", s.line);
                    bound.insert(s.name);
                    break;
                case Stmt::Kind::If: {
                    check_expr(*s.cond_lhs, bound, sized);
                    check_expr(*s.cond_rhs, bound, sized);
                    auto bt = bound, st = sized;
                    auto lt = lengthed, dt = directive_seen, pt = predicted;
                    check_body(s.then_body, bt, st, lt, dt, pt);
                    auto be = bound, se = sized;
                    auto le = lengthed, de = directive_seen, pe = predicted;
                    check_body(s.else_body, be, se, le, de, pe);
                    // names available afterwards: bound in both branches
                    for (const auto& n : bt)
                        if (be.count(n)) bound.insert(n);
                    break;
                }
                case Stmt::Kind::Length: {
                    check_expr(*s.expr, bound, sized);
                    require_classified(s.name, s.line);
                    if (lengthed.count(s.name))
                        throw PlanError("length of '" + s.name + "' set twice", s.line);
                    lengthed.insert(s.name);
                    break;
                }
                case Stmt::Kind::SizeIndependent: {
                    check_expr(*s.expr, bound, sized);
                    check_expr(*s.expr2, bound, sized);
                    const Classification* c = require_classified(s.name, s.line);
                    if (c->cls != DeviceClass::Independent)
                        throw PlanError("'" + s.name + "' is classified " + to_string(c->cls) +
                                            " but sized with 'size independent'",
                                        s.line);
                    note_directive(directive_seen, s.name, s.line);
                    sized.insert(s.name);
                    break;
                }
                case Stmt::Kind::SizeMirror: {
                    check_expr(*s.expr, bound, sized);
                    const Classification* c = require_classified(s.name, s.line);
                    if (c->cls != DeviceClass::Mirror || c->ref != s.ref)
                        throw PlanError("'" + s.name + "' must be sized as 'size mirror " +
                                            s.name + " from " + (c->ref.empty() ? "?" : c->ref) +
                                            "' to match its classification",
                                        s.line);
                    if (!sized.count(s.ref))
                        throw PlanError("mirror reference '" + s.ref + "' is not sized yet",
                                        s.line);
                    note_directive(directive_seen, s.name, s.line);
                    sized.insert(s.name);
                    break;
                }
                case Stmt::Kind::SetPassive:
                case Stmt::Kind::SetSource:
                    check_expr(*s.expr, bound, sized);
                    break;
                case Stmt::Kind::Predict:
                    check_expr(*s.expr, bound, sized);
                    if (predicted.count(s.name))
                        throw PlanError("metric '" + s.name + "' predicted twice", s.line);
                    predicted.insert(s.name);
                    break;
            }
        }
    }

    const Classification* require_classified(const std::string& device, int line) const {
        const Classification* c = plan_.find_class(device);
        if (!c)
            throw PlanError("unclassified device '" + device + "'", line);
        return c;
    }

    static void note_directive(std::set<std::string>& seen, const std::string& device, int line) {
        if (seen.count(device))
            throw PlanError("device '" + device + "' sized twice", line);
        seen.insert(device);
    }

    void static_checks() {
        // mirror / matched references resolve and mirror chains are acyclic
        for (const auto& [dev, c] : plan_.classifications) {
            if (c.cls == DeviceClass::Independent) continue;
            if (!plan_.find_class(c.ref))
                throw PlanError("'" + dev + "' references unclassified device '" + c.ref + "'",
                                c.line);
            if (c.ref == dev)
                throw PlanError("'" + dev + "' references itself", c.line);
        }
        for (const auto& [dev, c] : plan_.classifications) {
            if (c.cls != DeviceClass::Mirror) continue;
            std::set<std::string> seen = {dev};
            const Classification* cur = &c;
            while (cur->cls == DeviceClass::Mirror) {
                if (seen.count(cur->ref))
                    throw PlanError("mirror reference cycle through '" + cur->ref + "'", c.line);
                seen.insert(cur->ref);
                cur = plan_.find_class(cur->ref);
            }
        }

        std::set<std::string> bound, sized, lengthed, directives, predicted;
        check_body(plan_.statements, bound, sized, lengthed, directives, predicted);

        for (const auto& [dev, c] : plan_.classifications) {
            if (c.cls == DeviceClass::Matched) {
                if (directives.count(dev))
                    throw PlanError("matched device '" + dev + "' must not carry a size directive",
                                    c.line);
            } else if (!directives.count(dev)) {
                throw PlanError(std::string("classified device '") + dev +
                                    "' has no size directive",
                                c.line);
            }
            if (c.cls == DeviceClass::Independent && !lengthed.count(dev))
                throw PlanError("independent device '" + dev + "' has no length statement",
                                c.line);
        }

        // literal mirror-length mismatch is a hard error
        auto literal_length = [this](const std::string& dev) -> std::optional<double> {
            for (const auto& s : plan_.statements)
                if (s.kind == Stmt::Kind::Length && s.name == dev &&
                    s.expr->kind == Expr::Kind::Number)
                    return s.expr->number;
            return std::nullopt;
        };
        for (const auto& [dev, c] : plan_.classifications) {
            if (c.cls != DeviceClass::Mirror) continue;
            auto own = literal_length(dev);
            auto ref = literal_length(c.ref);
            if (own && ref && *own != *ref)
                throw PlanError("mirror device '" + dev + "' declares L=" + format_exact(*own) +
                                    " but its reference '" + c.ref + "' has L=" +
                                    format_exact(*ref) + " (mirrors must share L)",
                                c.line);
        }
    }
};

} // namespace plan_detail

/// Parse and statically validate a sizing plan.
inline SizingPlan parse_plan(const std::string& text) {
    return plan_detail::Parser(text).parse();
}

} // namespace sizeloop
