#pragma once

// SPICE-like netlist subset: parsing into an AST and elaboration into an
// indexed Circuit.
//
// Grammar (case-insensitive, line oriented, "+" continues the previous line,
// "*" starts a comment line, ";" starts an inline comment):
//
//   Rname n+ n- value            resistor (ohm)
//   Cname n+ n- value            capacitor (F)
//   Lname n+ n- value            inductor (H)
//   Vname n+ n- source           voltage source
//   Iname n+ n- source           current source, flows n+ -> n- through the source
//   Dname anode cathode [is=..] [n=..] [vt=..]
//   Gname n+ n- nc+ nc- gm       linear VCCS, current gm*(v(nc+)-v(nc-)) from n+ to n-
//   Bname n+ n- [i=]expr         behavioral current n+ -> n-, expr of v(node)
//
//   source := value | DC value | SIN(o a f [d [ph]]) | PULSE(v1 v2 td tr tf pw per)
//           | PWL(t1 v1 t2 v2 ...)
//   .tran tstep tstop | .wavelet tol tstop [window] | .print v(node)... | .end

#include "wavesim/errors.hpp"
#include "wavesim/expr.hpp"
#include "wavesim/waveform.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace wavesim {

// =============================================================================
// AST
// =============================================================================

struct ElementDecl {
    char kind = '?';                 ///< lower-case element letter
    std::string name;                ///< lower-case, includes the letter
    std::vector<std::string> nodes;
    double value = 0.0;              ///< R, C, L, G
    std::optional<SourceWaveform> waveform;  ///< V, I
    Expr expr;                       ///< B
    std::map<std::string, double> params;  ///< D
    int line = 0;
    int column = 0;
};

struct TranDirective {
    double tstep = 0.0;
    double tstop = 0.0;
};

struct WaveletDirective {
    double tol = 0.0;
    double tstop = 0.0;
    std::optional<double> window;
};

struct NetlistAst {
    std::string title;
    std::vector<ElementDecl> elements;
    std::optional<TranDirective> tran;
    std::optional<WaveletDirective> wavelet;
    std::vector<std::string> print_nodes;
};

// =============================================================================
// Numbers
// =============================================================================

/// Decimal number with optional engineering suffix (f p n u m k meg g) and
/// trailing unit letters, e.g. "1k", "10nF", "1meg", "2.5e-3".
inline std::optional<double> parse_number(std::string_view token) {
    if (token.empty()) return std::nullopt;
    std::size_t pos = 0;
    bool negative = false;
    if (token[0] == '+' || token[0] == '-') {
        negative = token[0] == '-';
        pos = 1;
    }
    if (pos >= token.size() || !(std::isdigit(static_cast<unsigned char>(token[pos])) || token[pos] == '.')) {
        return std::nullopt;
    }
    double mantissa = 0.0;
    auto [ptr, ec] = std::from_chars(token.data() + pos, token.data() + token.size(), mantissa);
    if (ec != std::errc{}) return std::nullopt;
    std::string rest(ptr, token.data() + token.size());
    for (char& c : rest) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (char c : rest) {
        if (!std::isalpha(static_cast<unsigned char>(c))) return std::nullopt;
    }
    int exponent = 0;
    if (rest.rfind("meg", 0) == 0) {
        exponent = 6;
    } else if (!rest.empty()) {
        switch (rest[0]) {
            case 'f': exponent = -15; break;
            case 'p': exponent = -12; break;
            case 'n': exponent = -9; break;
            case 'u': exponent = -6; break;
            case 'm': exponent = -3; break;
            case 'k': exponent = 3; break;
            case 'g': exponent = 9; break;
            default: break;  // unit letters only
        }
    }
    double v = mantissa;
    const std::string_view digits(token.data() + pos, static_cast<std::size_t>(ptr - (token.data() + pos)));
    if (exponent != 0 && digits.find_first_of("eE") == std::string_view::npos) {
        // "5u" -> "5e-6" so that suffixed values round like their literal spelling
        const std::string text = std::string(digits) + "e" + std::to_string(exponent);
        std::from_chars(text.data(), text.data() + text.size(), v);
    } else if (exponent != 0) {
        v = mantissa * std::pow(10.0, exponent);
    }
    return negative ? -v : v;
}

// =============================================================================
// Lexing helpers
// =============================================================================

namespace detail {

struct Token {
    std::string text;
    int column = 0;  ///< 1-based within the logical line
};

struct LogicalLine {
    std::string text;  ///< lower-cased
    int line = 0;
};

inline std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(' || c == ')' || c == '=' || c == ',') {
            if (c != ',') out.push_back({std::string(1, c), static_cast<int>(i) + 1});
            ++i;
        } else {
            const std::size_t start = i;
            while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '(' &&
                   s[i] != ')' && s[i] != '=' && s[i] != ',') {
                ++i;
            }
            out.push_back({std::string(s.substr(start, i - start)), static_cast<int>(start) + 1});
        }
    }
    return out;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

/// Recursive-descent parser for behavioral expressions.
class ExprParser {
public:
    ExprParser(std::string_view text, int line, int column_base)
        : s_(text), line_(line), base_(column_base) {}

    Expr parse() {
        skip_ws();
        if (pos_ >= s_.size()) fail("empty expression");
        parse_sum();
        skip_ws();
        if (pos_ < s_.size()) fail(std::string("unexpected character '") + s_[pos_] + "'");
        if (e_.depth() > kMaxExprDepth) fail("expression nesting deeper than 64");
        return std::move(e_);
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, base_ + static_cast<int>(pos_));
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    struct DepthGuard {
        ExprParser& p;
        explicit DepthGuard(ExprParser& parser) : p(parser) {
            if (++p.depth_ > kMaxExprDepth) p.fail("expression nesting deeper than 64");
        }
        ~DepthGuard() { --p.depth_; }
    };

    int parse_sum() {
        int lhs = parse_product();
        for (;;) {
            if (accept('+')) {
                lhs = e_.add_binary(ExprOp::Add, lhs, parse_product());
            } else if (accept('-')) {
                lhs = e_.add_binary(ExprOp::Sub, lhs, parse_product());
            } else {
                return lhs;
            }
        }
    }

    int parse_product() {
        int lhs = parse_unary();
        for (;;) {
            if (accept('*')) {
                lhs = e_.add_binary(ExprOp::Mul, lhs, parse_unary());
            } else if (accept('/')) {
                lhs = e_.add_binary(ExprOp::Div, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    int parse_unary() {
        DepthGuard guard(*this);
        if (accept('-')) return e_.add_unary(ExprOp::Neg, parse_unary());
        if (accept('+')) return parse_unary();
        return parse_primary();
    }

    std::string identifier() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            ++pos_;
        }
        return std::string(s_.substr(start, pos_ - start));
    }

    int parse_primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            const int inner = parse_sum();
            expect(')');
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
            if (pos_ < s_.size() && s_[pos_] == 'e') {
                std::size_t q = pos_ + 1;
                if (q < s_.size() && (s_[q] == '+' || s_[q] == '-')) ++q;
                if (q < s_.size() && std::isdigit(static_cast<unsigned char>(s_[q]))) {
                    pos_ = q;
                    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
                }
            }
            while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const auto v = parse_number(s_.substr(start, pos_ - start));
            if (!v) fail("malformed number");
            return e_.add_literal(*v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            const std::string name = identifier();
            if (name == "v") {
                expect('(');
                skip_ws();
                const std::string node = identifier();
                if (node.empty()) fail("expected node name in v()");
                expect(')');
                return e_.add_var(node);
            }
            ExprOp op;
            if (name == "sin") {
                op = ExprOp::Sin;
            } else if (name == "cos") {
                op = ExprOp::Cos;
            } else if (name == "exp") {
                op = ExprOp::Exp;
            } else if (name == "tanh") {
                op = ExprOp::Tanh;
            } else if (name == "pow") {
                op = ExprOp::Pow;
            } else {
                pos_ = start;
                fail("unknown function or identifier '" + name + "'");
            }
            expect('(');
            const int arg = parse_sum();
            if (op == ExprOp::Pow) {
                expect(',');
                const int exponent = parse_sum();
                expect(')');
                return e_.add_binary(ExprOp::Pow, arg, exponent);
            }
            expect(')');
            return e_.add_unary(op, arg);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
    int base_;
    int depth_ = 0;
    Expr e_;
};

class LineParser {
public:
    LineParser(const LogicalLine& line) : line_(line), tokens_(tokenize(line.text)) {}

    [[noreturn]] void fail(const std::string& msg, std::size_t token_index) const {
        const int col = token_index < tokens_.size() ? tokens_[token_index].column
                                                     : static_cast<int>(line_.text.size()) + 1;
        throw ParseError(msg, line_.line, col);
    }

    [[nodiscard]] const std::vector<Token>& tokens() const noexcept { return tokens_; }
    [[nodiscard]] std::size_t size() const noexcept { return tokens_.size(); }
    [[nodiscard]] const std::string& at(std::size_t i) const { return tokens_[i].text; }
    [[nodiscard]] int line() const noexcept { return line_.line; }
    [[nodiscard]] const std::string& text() const noexcept { return line_.text; }

    double number(std::size_t i, const char* what) const {
        if (i >= tokens_.size()) fail(std::string("missing ") + what, i);
        const auto v = parse_number(tokens_[i].text);
        if (!v) fail(std::string("malformed ") + what + " '" + tokens_[i].text + "'", i);
        return *v;
    }

    void expect(std::size_t i, const char* text) const {
        if (i >= tokens_.size() || tokens_[i].text != text) {
            fail(std::string("expected '") + text + "'", i);
        }
    }

    /// Numbers between "(" at index `open` and the matching ")"; returns index past ")".
    std::size_t paren_numbers(std::size_t open, std::vector<double>& out) const {
        expect(open, "(");
        std::size_t i = open + 1;
        while (i < tokens_.size() && tokens_[i].text != ")") {
            out.push_back(number(i, "waveform parameter"));
            ++i;
        }
        expect(i, ")");
        return i + 1;
    }

private:
    const LogicalLine& line_;
    std::vector<Token> tokens_;
};

inline SourceWaveform parse_source(const LineParser& lp, std::size_t i) {
    if (i >= lp.size()) lp.fail("missing source value", i);
    const std::string& head = lp.at(i);
    std::size_t end = i + 1;
    SourceWaveform wave;
    try {
        if (head == "dc") {
            wave = DcWave{lp.number(i + 1, "DC value")};
            end = i + 2;
        } else if (head == "sin") {
            std::vector<double> a;
            end = lp.paren_numbers(i + 1, a);
            if (a.size() < 3 || a.size() > 5) lp.fail("SIN expects 3 to 5 parameters", i);
            wave = make_sin(a[0], a[1], a[2], a.size() > 3 ? a[3] : 0.0, a.size() > 4 ? a[4] : 0.0);
        } else if (head == "pulse") {
            std::vector<double> a;
            end = lp.paren_numbers(i + 1, a);
            if (a.size() != 7) lp.fail("PULSE expects 7 parameters", i);
            wave = make_pulse(a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
        } else if (head == "pwl") {
            std::vector<double> a;
            end = lp.paren_numbers(i + 1, a);
            if (a.empty() || a.size() % 2 != 0) lp.fail("PWL expects time/value pairs", i);
            std::vector<std::pair<double, double>> pts;
            for (std::size_t k = 0; k < a.size(); k += 2) pts.emplace_back(a[k], a[k + 1]);
            wave = make_pwl(std::move(pts));
        } else {
            wave = DcWave{lp.number(i, "source value")};
        }
    } catch (const ArgumentError& err) {
        lp.fail(err.what(), i);
    }
    if (end < lp.size()) lp.fail("unexpected token '" + lp.at(end) + "'", end);
    return wave;
}

}  // namespace detail

// =============================================================================
// parse
// =============================================================================

inline NetlistAst parse(std::string_view text) {
    using namespace detail;
    NetlistAst ast;

    // Join continuation lines and drop comments.
    std::vector<LogicalLine> lines;
    int line_no = 0;
    std::size_t pos = 0;
    bool seen_content = false;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view raw = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        std::string_view t = trim(raw);
        if (t.empty()) continue;
        if (t[0] == '*') {
            if (!seen_content && ast.title.empty()) ast.title = std::string(trim(t.substr(1)));
            continue;
        }
        if (const auto semi = t.find(';'); semi != std::string_view::npos) t = trim(t.substr(0, semi));
        if (t.empty()) continue;
        seen_content = true;
        if (t[0] == '+') {
            if (lines.empty()) throw ParseError("continuation line without a preceding line", line_no, 1);
            lines.back().text += " " + lower(t.substr(1));
            continue;
        }
        lines.push_back({lower(t), line_no});
    }

    bool end_seen = false;
    std::unordered_map<std::string, int> names;
    for (const auto& ll : lines) {
        LineParser lp(ll);
        const std::string& head = lp.at(0);
        if (head == ".end") {
            if (end_seen) lp.fail("duplicate .end", 0);
            if (lp.size() > 1) lp.fail("unexpected token after .end", 1);
            end_seen = true;
            continue;
        }
        if (end_seen) continue;

        if (head[0] == '.') {
            if (head == ".tran") {
                TranDirective d{lp.number(1, "tstep"), lp.number(2, "tstop")};
                if (lp.size() > 3) lp.fail("unexpected token '" + lp.at(3) + "'", 3);
                if (!(d.tstep > 0.0) || !(d.tstop > 0.0)) lp.fail(".tran times must be positive", 1);
                ast.tran = d;
            } else if (head == ".wavelet") {
                WaveletDirective d{lp.number(1, "tol"), lp.number(2, "tstop"), std::nullopt};
                if (lp.size() > 3) d.window = lp.number(3, "window");
                if (lp.size() > 4) lp.fail("unexpected token '" + lp.at(4) + "'", 4);
                if (!(d.tol > 0.0) || !(d.tstop > 0.0) || (d.window && !(*d.window > 0.0))) {
                    lp.fail(".wavelet parameters must be positive", 1);
                }
                ast.wavelet = d;
            } else if (head == ".print") {
                std::size_t i = 1;
                if (lp.size() == 1) lp.fail(".print needs at least one v(node)", 1);
                while (i < lp.size()) {
                    if (lp.at(i) != "v") lp.fail("expected v(node) in .print", i);
                    lp.expect(i + 1, "(");
                    if (i + 2 >= lp.size()) lp.fail("missing node name", i + 2);
                    ast.print_nodes.push_back(lp.at(i + 2));
                    lp.expect(i + 3, ")");
                    i += 4;
                }
            } else {
                lp.fail("unsupported directive '" + head + "'", 0);
            }
            continue;
        }

        ElementDecl el;
        el.kind = head[0];
        el.name = head;
        el.line = ll.line;
        el.column = lp.tokens()[0].column;
        static constexpr std::string_view kKinds = "rclvidgb";
        if (kKinds.find(el.kind) == std::string_view::npos) {
            lp.fail(std::string("unsupported element letter '") +
                        static_cast<char>(std::toupper(static_cast<unsigned char>(el.kind))) + "'",
                    0);
        }
        if (names.contains(el.name)) lp.fail("duplicate element name '" + el.name + "'", 0);
        names.emplace(el.name, ll.line);

        const std::size_t node_count = el.kind == 'g' ? 4 : 2;
        for (std::size_t k = 1; k <= node_count; ++k) {
            if (k >= lp.size()) lp.fail("missing node name", k);
            const std::string& node = lp.at(k);
            if (node == "(" || node == ")" || node == "=") lp.fail("malformed node name", k);
            el.nodes.push_back(node);
        }
        const std::size_t next = node_count + 1;

        switch (el.kind) {
            case 'r':
            case 'c':
            case 'l':
            case 'g': {
                el.value = lp.number(next, "element value");
                if (lp.size() > next + 1) lp.fail("unexpected token '" + lp.at(next + 1) + "'", next + 1);
                if (el.kind != 'g' && !(el.value > 0.0)) lp.fail("element value must be positive", next);
                break;
            }
            case 'v':
            case 'i': el.waveform = parse_source(lp, next); break;
            case 'd': {
                el.params = {{"is", 1e-14}, {"n", 1.0}, {"vt", 0.02585}};
                std::size_t i = next;
                while (i < lp.size()) {
                    const std::string& key = lp.at(i);
                    if (!el.params.contains(key)) lp.fail("unknown diode parameter '" + key + "'", i);
                    lp.expect(i + 1, "=");
                    const double v = lp.number(i + 2, "diode parameter");
                    if (!(v > 0.0)) lp.fail("diode parameter must be positive", i + 2);
                    el.params[key] = v;
                    i += 3;
                }
                break;
            }
            case 'b': {
                if (next >= lp.size()) lp.fail("missing behavioral expression", next);
                const int col = lp.tokens()[next].column;
                std::string_view rest(ll.text);
                rest.remove_prefix(static_cast<std::size_t>(col - 1));
                int base = col;
                if (rest.rfind("i", 0) == 0) {
                    std::string_view after = trim(rest.substr(1));
                    if (!after.empty() && after[0] == '=') {
                        const std::size_t skip = rest.size() - after.size() + 1;
                        rest.remove_prefix(skip);
                        base += static_cast<int>(skip);
                    }
                }
                std::string_view body = rest;
                if (!trim(body).empty() && trim(body).front() == '{') {
                    const auto open = body.find('{');
                    const auto close = body.rfind('}');
                    if (close == std::string_view::npos || close < open) {
                        throw ParseError("unterminated '{' in expression", ll.line, base + static_cast<int>(open));
                    }
                    if (!trim(body.substr(close + 1)).empty()) {
                        throw ParseError("unexpected text after '}'", ll.line, base + static_cast<int>(close) + 1);
                    }
                    base += static_cast<int>(open) + 1;
                    body = body.substr(open + 1, close - open - 1);
                }
                el.expr = ExprParser(body, ll.line, base).parse();
                break;
            }
            default: break;
        }
        ast.elements.push_back(std::move(el));
    }
    if (!end_seen) throw ParseError("missing .end", line_no, 1);
    return ast;
}

// =============================================================================
// Circuit
// =============================================================================

/// Node or unknown index; kGround marks the reference node.
inline constexpr int kGround = -1;

struct Resistor {
    std::string name;
    int a, b;
    double resistance;
};

struct Capacitor {
    std::string name;
    int a, b;
    double capacitance;
};

struct Inductor {
    std::string name;
    int a, b;
    int branch;
    double inductance;
};

struct VoltageSource {
    std::string name;
    int a, b;
    int branch;
    SourceWaveform wave;
};

struct CurrentSource {
    std::string name;
    int a, b;
    SourceWaveform wave;
};

struct Diode {
    std::string name;
    int anode, cathode;
    double saturation_current;
    double emission;
    double thermal_voltage;
};

struct Vccs {
    std::string name;
    int a, b, ctrl_a, ctrl_b;
    double gm;
};

struct BehavioralSource {
    std::string name;
    int a, b;
    Expr expr;
    std::vector<int> slots;  ///< unknown index per expr variable, kGround for "0"
};

using Element = std::variant<Resistor, Capacitor, Inductor, VoltageSource, CurrentSource, Diode,
                             Vccs, BehavioralSource>;

/// Elaborated netlist. Unknown layout: node voltages, then V-source currents,
/// then inductor currents.
struct Circuit {
    std::string title;
    std::vector<std::string> node_names;
    std::vector<std::string> branch_names;  ///< element names owning a current unknown
    std::vector<Element> elements;
    std::vector<std::string> warnings;
    std::vector<int> printed;  ///< unknown indices of printed variables
    std::optional<TranDirective> tran;
    std::optional<WaveletDirective> wavelet;

    [[nodiscard]] std::size_t node_count() const noexcept { return node_names.size(); }
    [[nodiscard]] std::size_t unknown_count() const noexcept {
        return node_names.size() + branch_names.size();
    }
    [[nodiscard]] bool is_current(std::size_t unknown) const noexcept {
        return unknown >= node_names.size();
    }
    [[nodiscard]] std::string unknown_label(std::size_t unknown) const {
        if (!is_current(unknown)) return "v(" + node_names[unknown] + ")";
        return "i(" + branch_names[unknown - node_names.size()] + ")";
    }
    [[nodiscard]] int find_node(std::string_view name) const {
        if (name == "0") return kGround;
        for (std::size_t i = 0; i < node_names.size(); ++i) {
            if (node_names[i] == name) return static_cast<int>(i);
        }
        throw ElaborationError("unknown node '" + std::string(name) + "'");
    }

    /// Corner times of all independent sources in [t0, t1].
    [[nodiscard]] std::vector<double> source_breakpoints(double t0, double t1) const {
        std::vector<double> out;
        for (const auto& el : elements) {
            const SourceWaveform* w = nullptr;
            if (const auto* v = std::get_if<VoltageSource>(&el)) w = &v->wave;
            if (const auto* i = std::get_if<CurrentSource>(&el)) w = &i->wave;
            if (w == nullptr) continue;
            const auto bp = waveform_breakpoints(*w, t0, t1);
            out.insert(out.end(), bp.begin(), bp.end());
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

inline Circuit elaborate(const NetlistAst& ast) {
    Circuit ckt;
    ckt.title = ast.title;
    ckt.tran = ast.tran;
    ckt.wavelet = ast.wavelet;

    std::unordered_map<std::string, int> node_index;
    auto intern = [&](const std::string& name) -> int {
        if (name == "0") return kGround;
        auto [it, inserted] = node_index.emplace(name, static_cast<int>(ckt.node_names.size()));
        if (inserted) ckt.node_names.push_back(name);
        return it->second;
    };
    for (const auto& el : ast.elements) {
        for (const auto& n : el.nodes) intern(n);
    }
    auto lookup = [&](const std::string& name, const ElementDecl& el) -> int {
        if (name == "0") return kGround;
        auto it = node_index.find(name);
        if (it == node_index.end()) {
            throw ElaborationError("line " + std::to_string(el.line) + ": element '" + el.name +
                                   "' references undeclared node '" + name + "'");
        }
        return it->second;
    };

    const int nodes = static_cast<int>(ckt.node_names.size());
    int vsources = 0;
    for (const auto& el : ast.elements) vsources += el.kind == 'v';
    int next_vbranch = nodes;
    int next_lbranch = nodes + vsources;
    std::vector<std::string> vnames;
    std::vector<std::string> lnames;

    for (const auto& el : ast.elements) {
        const int a = intern(el.nodes[0]);
        const int b = intern(el.nodes[1]);
        switch (el.kind) {
            case 'r': ckt.elements.emplace_back(Resistor{el.name, a, b, el.value}); break;
            case 'c': ckt.elements.emplace_back(Capacitor{el.name, a, b, el.value}); break;
            case 'l':
                ckt.elements.emplace_back(Inductor{el.name, a, b, next_lbranch++, el.value});
                lnames.push_back(el.name);
                break;
            case 'v':
                ckt.elements.emplace_back(VoltageSource{el.name, a, b, next_vbranch++, *el.waveform});
                vnames.push_back(el.name);
                break;
            case 'i': ckt.elements.emplace_back(CurrentSource{el.name, a, b, *el.waveform}); break;
            case 'd':
                ckt.elements.emplace_back(Diode{el.name, a, b, el.params.at("is"), el.params.at("n"),
                                                el.params.at("vt")});
                break;
            case 'g':
                ckt.elements.emplace_back(
                    Vccs{el.name, a, b, intern(el.nodes[2]), intern(el.nodes[3]), el.value});
                break;
            case 'b': {
                BehavioralSource src{el.name, a, b, el.expr, {}};
                for (const auto& v : el.expr.variables()) src.slots.push_back(lookup(v, el));
                ckt.elements.emplace_back(std::move(src));
                break;
            }
            default: throw ElaborationError("unsupported element '" + el.name + "'");
        }
    }
    ckt.branch_names = vnames;
    ckt.branch_names.insert(ckt.branch_names.end(), lnames.begin(), lnames.end());

    // Nodes without a DC path (R, L, V, D) to ground are floating.
    std::vector<int> parent(static_cast<std::size_t>(nodes) + 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        auto ux = static_cast<std::size_t>(x);
        while (parent[ux] != static_cast<int>(ux)) {
            parent[ux] = parent[static_cast<std::size_t>(parent[ux])];
            ux = static_cast<std::size_t>(parent[ux]);
        }
        return static_cast<int>(ux);
    };
    auto slot = [&](int node) { return node == kGround ? nodes : node; };
    auto unite = [&](int x, int y) { parent[static_cast<std::size_t>(find(slot(x)))] = find(slot(y)); };
    for (const auto& el : ckt.elements) {
        std::visit(
            [&](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, Resistor> || std::is_same_v<E, Inductor> ||
                              std::is_same_v<E, VoltageSource>) {
                    unite(e.a, e.b);
                } else if constexpr (std::is_same_v<E, Diode>) {
                    unite(e.anode, e.cathode);
                }
            },
            el);
    }
    for (int n = 0; n < nodes; ++n) {
        if (find(n) != find(nodes)) {
            ckt.warnings.push_back("node '" + ckt.node_names[static_cast<std::size_t>(n)] +
                                   "' has no DC path to ground");
        }
    }

    if (ast.print_nodes.empty()) {
        for (int n = 0; n < nodes; ++n) ckt.printed.push_back(n);
    } else {
        for (const auto& name : ast.print_nodes) {
            auto it = node_index.find(name);
            if (it == node_index.end()) {
                throw ElaborationError(".print references undeclared node '" + name + "'");
            }
            ckt.printed.push_back(it->second);
        }
    }
    return ckt;
}

}  // namespace wavesim
