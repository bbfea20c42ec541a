#include "bdkd/shader.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>

namespace bdkd {
namespace {

struct OpInfo {
    const char* name; // function name, or operator glyph for infix
    int arity;
};

const std::map<ShaderOp, OpInfo> kOps = {
    {ShaderOp::U, {"u", 0}},         {ShaderOp::V, {"v", 0}},
    {ShaderOp::S0, {"s0", 0}},       {ShaderOp::S1, {"s1", 0}},
    {ShaderOp::S2, {"s2", 0}},       {ShaderOp::S3, {"s3", 0}},
    {ShaderOp::Lit, {"", 0}},        {ShaderOp::Sin, {"sin", 1}},
    {ShaderOp::Cos, {"cos", 1}},     {ShaderOp::Abs, {"abs", 1}},
    {ShaderOp::Fract, {"fract", 1}}, {ShaderOp::Floor, {"floor", 1}},
    {ShaderOp::Add, {"+", 2}},       {ShaderOp::Sub, {"-", 2}},
    {ShaderOp::Mul, {"*", 2}},       {ShaderOp::Div, {"/", 2}},
    {ShaderOp::Min, {"min", 2}},     {ShaderOp::Max, {"max", 2}},
    {ShaderOp::Pow, {"pow", 2}},     {ShaderOp::Step, {"step", 2}},
    {ShaderOp::Length2, {"length2", 2}}, {ShaderOp::Mod, {"mod", 2}},
    {ShaderOp::Mix, {"mix", 3}},     {ShaderOp::Noise, {"noise", 3}},
};

const std::map<std::string, ShaderOp> kFunctions = {
    {"sin", ShaderOp::Sin},   {"cos", ShaderOp::Cos},         {"abs", ShaderOp::Abs},
    {"fract", ShaderOp::Fract}, {"floor", ShaderOp::Floor},   {"min", ShaderOp::Min},
    {"max", ShaderOp::Max},   {"pow", ShaderOp::Pow},         {"step", ShaderOp::Step},
    {"length2", ShaderOp::Length2}, {"mod", ShaderOp::Mod},   {"mix", ShaderOp::Mix},
    {"noise", ShaderOp::Noise},
};

constexpr float kValueCap = 1e9f;

float finite_clamp(float x) {
    if (!std::isfinite(x)) return 0.0f;
    if (x > kValueCap) return kValueCap;
    if (x < -kValueCap) return -kValueCap;
    return x;
}

// hash of an integer lattice point, stable across platforms
float lattice_value(std::int64_t ix, std::int64_t iy, int k) {
    std::uint32_t h = static_cast<std::uint32_t>(ix) * 374761393u ^
                      static_cast<std::uint32_t>(iy) * 668265263u ^
                      (static_cast<std::uint32_t>(k) + 1u) * 2246822519u;
    h = (h ^ (h >> 13)) * 1274126177u;
    h ^= h >> 16;
    return static_cast<float>(h) * (1.0f / 4294967296.0f);
}

float value_noise(float x, float y, float octave) {
    const int k = static_cast<int>(std::lround(std::clamp(octave, 0.0f, 8.0f)));
    const float freq = static_cast<float>(1 << k);
    const float px = x * freq, py = y * freq;
    const float fx = std::floor(px), fy = std::floor(py);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    float tx = px - fx, ty = py - fy;
    tx = tx * tx * (3.0f - 2.0f * tx); // smoothstep fade
    ty = ty * ty * (3.0f - 2.0f * ty);
    const float v00 = lattice_value(ix, iy, k), v10 = lattice_value(ix + 1, iy, k);
    const float v01 = lattice_value(ix, iy + 1, k), v11 = lattice_value(ix + 1, iy + 1, k);
    const float a = v00 + (v10 - v00) * tx;
    const float b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;
}

// ---------------------------------------------------------------------------
// lexer

enum class TokKind { Number, Ident, Punct, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;
    float number = 0.0f;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

    [[noreturn]] void fail(const Token& at, const std::string& expected) const {
        std::string got = at.kind == TokKind::End ? "end of input" : "'" + at.text + "'";
        throw ContractError("shader parse error " + std::to_string(at.line) + ":" +
                            std::to_string(at.col) + ": expected " + expected + ", got " + got);
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) bump();
        tok_ = Token{};
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= src_.size()) return; // End
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            lex_number();
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok_.kind = TokKind::Ident;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                tok_.text += src_[pos_];
                bump();
            }
        } else if (std::string("+-*/(),;").find(c) != std::string::npos) {
            tok_.kind = TokKind::Punct;
            tok_.text = std::string(1, c);
            bump();
        } else {
            throw ContractError("shader parse error " + std::to_string(line_) + ":" +
                                std::to_string(col_) + ": unexpected character '" + std::string(1, c) + "'");
        }
    }

    void lex_number() {
        tok_.kind = TokKind::Number;
        const std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            bump();
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            bump();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) bump();
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
        }
        tok_.text = src_.substr(start, pos_ - start);
        const auto* first = tok_.text.data();
        const auto* last = first + tok_.text.size();
        auto [end, ec] = std::from_chars(first, last, tok_.number);
        if (ec != std::errc() || end != last || !std::isfinite(tok_.number))
            throw ContractError("shader parse error " + std::to_string(tok_.line) + ":" +
                                std::to_string(tok_.col) + ": malformed number '" + tok_.text + "'");
    }

    void bump() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

// ---------------------------------------------------------------------------
// parser

class Parser {
public:
    explicit Parser(const std::string& src) : lex_(src) {}

    ShaderProgram parse_program() {
        std::vector<ShaderExpr> exprs;
        exprs.push_back(parse_expr());
        while (accept_punct(";")) {
            if (lex_.peek().kind == TokKind::End) break; // trailing separator
            exprs.push_back(parse_expr());
        }
        if (lex_.peek().kind != TokKind::End) lex_.fail(lex_.peek(), "';' or end of input");
        if (exprs.size() > 3)
            throw ContractError("shader parse error: at most three channel expressions allowed, got " +
                                std::to_string(exprs.size()));
        ShaderProgram p;
        p.channels[0] = exprs[0];
        p.channels[1] = exprs.size() > 1 ? exprs[1] : exprs[0];
        p.channels[2] = exprs.size() > 2 ? exprs[2] : p.channels[1];
        return p;
    }

private:
    bool accept_punct(const char* s) {
        if (lex_.peek().kind == TokKind::Punct && lex_.peek().text == s) {
            lex_.take();
            return true;
        }
        return false;
    }

    void expect_punct(const char* s) {
        if (!accept_punct(s)) lex_.fail(lex_.peek(), std::string("'") + s + "'");
    }

    ShaderExpr parse_expr() {
        ShaderExpr left = parse_term();
        for (;;) {
            if (accept_punct("+")) {
                left = ShaderExpr{ShaderOp::Add, 0.0f, {std::move(left), parse_term()}};
            } else if (accept_punct("-")) {
                left = ShaderExpr{ShaderOp::Sub, 0.0f, {std::move(left), parse_term()}};
            } else {
                return left;
            }
        }
    }

    ShaderExpr parse_term() {
        ShaderExpr left = parse_unary();
        for (;;) {
            if (accept_punct("*")) {
                left = ShaderExpr{ShaderOp::Mul, 0.0f, {std::move(left), parse_unary()}};
            } else if (accept_punct("/")) {
                left = ShaderExpr{ShaderOp::Div, 0.0f, {std::move(left), parse_unary()}};
            } else {
                return left;
            }
        }
    }

    ShaderExpr parse_unary() {
        if (accept_punct("-")) {
            ShaderExpr inner = parse_unary();
            if (inner.op == ShaderOp::Lit) {
                inner.literal = -inner.literal;
                return inner;
            }
            ShaderExpr zero{ShaderOp::Lit, 0.0f, {}};
            return ShaderExpr{ShaderOp::Sub, 0.0f, {std::move(zero), std::move(inner)}};
        }
        return parse_primary();
    }

    ShaderExpr parse_primary() {
        const Token& t = lex_.peek();
        if (t.kind == TokKind::Number) {
            Token n = lex_.take();
            return ShaderExpr{ShaderOp::Lit, n.number, {}};
        }
        if (t.kind == TokKind::Punct && t.text == "(") {
            lex_.take();
            ShaderExpr e = parse_expr();
            expect_punct(")");
            return e;
        }
        if (t.kind == TokKind::Ident) {
            Token id = lex_.take();
            if (id.text == "u") return ShaderExpr{ShaderOp::U, 0.0f, {}};
            if (id.text == "v") return ShaderExpr{ShaderOp::V, 0.0f, {}};
            if (id.text == "s0") return ShaderExpr{ShaderOp::S0, 0.0f, {}};
            if (id.text == "s1") return ShaderExpr{ShaderOp::S1, 0.0f, {}};
            if (id.text == "s2") return ShaderExpr{ShaderOp::S2, 0.0f, {}};
            if (id.text == "s3") return ShaderExpr{ShaderOp::S3, 0.0f, {}};
            auto fn = kFunctions.find(id.text);
            if (fn == kFunctions.end())
                throw ContractError("shader parse error " + std::to_string(id.line) + ":" +
                                    std::to_string(id.col) + ": unknown identifier '" + id.text + "'");
            expect_punct("(");
            ShaderExpr call{fn->second, 0.0f, {}};
            call.kids.push_back(parse_expr());
            while (accept_punct(",")) call.kids.push_back(parse_expr());
            expect_punct(")");
            const int want = shader_op_arity(fn->second);
            if (static_cast<int>(call.kids.size()) != want)
                throw ContractError("shader parse error " + std::to_string(id.line) + ":" +
                                    std::to_string(id.col) + ": " + id.text + " takes " +
                                    std::to_string(want) + " argument(s), got " +
                                    std::to_string(call.kids.size()));
            return call;
        }
        lex_.fail(t, "a number, '(', '-', or an identifier");
    }

    Lexer lex_;
};

// ---------------------------------------------------------------------------
// printer

std::string format_float(float v) {
    char buf[48];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

int infix_prec(ShaderOp op) {
    switch (op) {
        case ShaderOp::Add:
        case ShaderOp::Sub: return 1;
        case ShaderOp::Mul:
        case ShaderOp::Div: return 2;
        default: return 3;
    }
}

void print_expr(const ShaderExpr& e, int parent_prec, bool is_right, std::string& out) {
    const int prec = infix_prec(e.op);
    switch (e.op) {
        case ShaderOp::Lit: out += format_float(e.literal); return;
        case ShaderOp::U:
        case ShaderOp::V:
        case ShaderOp::S0:
        case ShaderOp::S1:
        case ShaderOp::S2:
        case ShaderOp::S3: out += kOps.at(e.op).name; return;
        case ShaderOp::Add:
        case ShaderOp::Sub:
        case ShaderOp::Mul:
        case ShaderOp::Div: {
            const bool parens = prec < parent_prec || (prec == parent_prec && is_right);
            if (parens) out += "(";
            print_expr(e.kids[0], prec, false, out);
            out += kOps.at(e.op).name;
            print_expr(e.kids[1], prec, true, out);
            if (parens) out += ")";
            return;
        }
        default: {
            out += kOps.at(e.op).name;
            out += "(";
            for (std::size_t i = 0; i < e.kids.size(); ++i) {
                if (i) out += ",";
                print_expr(e.kids[i], 0, false, out);
            }
            out += ")";
            return;
        }
    }
}

} // namespace

int shader_op_arity(ShaderOp op) { return kOps.at(op).arity; }

int ShaderExpr::depth() const {
    int d = 0;
    for (const ShaderExpr& k : kids) d = std::max(d, k.depth());
    return d + 1;
}

float eval_shader(const ShaderExpr& e, float u, float v, const std::array<float, 4>& s) {
    switch (e.op) {
        case ShaderOp::U: return u;
        case ShaderOp::V: return v;
        case ShaderOp::S0: return s[0];
        case ShaderOp::S1: return s[1];
        case ShaderOp::S2: return s[2];
        case ShaderOp::S3: return s[3];
        case ShaderOp::Lit: return e.literal;
        default: break;
    }
    const float a = eval_shader(e.kids[0], u, v, s);
    const float b = e.kids.size() > 1 ? eval_shader(e.kids[1], u, v, s) : 0.0f;
    const float c = e.kids.size() > 2 ? eval_shader(e.kids[2], u, v, s) : 0.0f;
    float r = 0.0f;
    switch (e.op) {
        case ShaderOp::Sin: r = std::sin(a); break;
        case ShaderOp::Cos: r = std::cos(a); break;
        case ShaderOp::Abs: r = std::abs(a); break;
        case ShaderOp::Fract: r = a - std::floor(a); break;
        case ShaderOp::Floor: r = std::floor(a); break;
        case ShaderOp::Add: r = a + b; break;
        case ShaderOp::Sub: r = a - b; break;
        case ShaderOp::Mul: r = a * b; break;
        case ShaderOp::Div: r = std::abs(b) < 1e-6f ? a : a / b; break;
        case ShaderOp::Min: r = std::min(a, b); break;
        case ShaderOp::Max: r = std::max(a, b); break;
        case ShaderOp::Pow:
            r = std::exp(std::clamp(b * std::log(std::max(std::abs(a), 1e-6f)), -30.0f, 30.0f));
            break;
        case ShaderOp::Step: r = b >= a ? 1.0f : 0.0f; break;
        case ShaderOp::Length2: r = std::sqrt(a * a + b * b); break;
        case ShaderOp::Mod: r = std::abs(b) < 1e-6f ? 0.0f : a - b * std::floor(a / b); break;
        case ShaderOp::Mix: r = a + (b - a) * c; break;
        case ShaderOp::Noise: r = value_noise(a, b, c); break;
        default: break;
    }
    return finite_clamp(r);
}

ShaderProgram parse_shader(const std::string& source) {
    Parser p(source);
    return p.parse_program();
}

std::string print_shader(const ShaderProgram& p) {
    std::string out;
    const bool broadcast = p.channels[0] == p.channels[1] && p.channels[1] == p.channels[2];
    print_expr(p.channels[0], 0, false, out);
    if (!broadcast) {
        out += "; ";
        print_expr(p.channels[1], 0, false, out);
        out += "; ";
        print_expr(p.channels[2], 0, false, out);
    }
    return out;
}

ShaderProgram random_program(Rng& rng, int max_depth) {
    require(max_depth >= 1, "random_program: max_depth must be >= 1");

    // operator pool with sampling weights; texture-producing ops are favored
    static const std::vector<std::pair<ShaderOp, double>> pool = {
        {ShaderOp::Sin, 3.0},   {ShaderOp::Cos, 3.0},  {ShaderOp::Fract, 3.0},
        {ShaderOp::Abs, 1.5},   {ShaderOp::Floor, 1.0}, {ShaderOp::Add, 2.0},
        {ShaderOp::Sub, 2.0},   {ShaderOp::Mul, 3.0},  {ShaderOp::Div, 1.0},
        {ShaderOp::Min, 1.0},   {ShaderOp::Max, 1.0},  {ShaderOp::Pow, 0.5},
        {ShaderOp::Step, 1.0},  {ShaderOp::Length2, 1.0}, {ShaderOp::Mod, 1.0},
        {ShaderOp::Mix, 1.0},   {ShaderOp::Noise, 2.0},
    };
    static const double pool_total = [] {
        double t = 0.0;
        for (const auto& [op, w] : pool) t += w;
        return t;
    }();

    // when forced (or chosen) to stop: coordinates, seed params, or a literal
    auto gen_terminal = [&rng]() -> ShaderExpr {
        const double w = rng.uniform(0.0, 10.0); // u 3, v 3, s* 0.5 each, lit 2
        if (w < 3.0) return {ShaderOp::U, 0.0f, {}};
        if (w < 6.0) return {ShaderOp::V, 0.0f, {}};
        if (w < 6.5) return {ShaderOp::S0, 0.0f, {}};
        if (w < 7.0) return {ShaderOp::S1, 0.0f, {}};
        if (w < 7.5) return {ShaderOp::S2, 0.0f, {}};
        if (w < 8.0) return {ShaderOp::S3, 0.0f, {}};
        return {ShaderOp::Lit, static_cast<float>(rng.uniform(-2.0, 2.0)), {}};
    };

    // recursive expansion; `level` is 1 at the root
    auto gen = [&](auto&& self, int level) -> ShaderExpr {
        const bool forced = level >= max_depth;
        const double p_term = level == 1 ? 0.0 : std::min(0.9, 0.05 + 0.08 * level);
        if (forced || rng.uniform() < p_term) return gen_terminal();
        double pick = rng.uniform(0.0, pool_total);
        ShaderOp op = pool.back().first;
        for (const auto& [cand, w] : pool) {
            if (pick < w) {
                op = cand;
                break;
            }
            pick -= w;
        }
        ShaderExpr e{op, 0.0f, {}};
        const int arity = shader_op_arity(op);
        for (int i = 0; i < arity; ++i) e.kids.push_back(self(self, level + 1));
        return e;
    };

    ShaderProgram prog;
    for (float& sp : prog.seed_params) sp = static_cast<float>(rng.uniform(-2.0, 2.0));
    const bool broadcast = rng.uniform() < 0.25;
    prog.channels[0] = gen(gen, 1);
    if (broadcast) {
        prog.channels[1] = prog.channels[0];
        prog.channels[2] = prog.channels[0];
    } else {
        prog.channels[1] = gen(gen, 1);
        prog.channels[2] = gen(gen, 1);
    }
    return prog;
}

Tensor render_shader(const ShaderProgram& p, int H, int W) {
    require(H >= 1 && W >= 1, "render_shader: image size must be positive");
    Tensor img({3, H, W});
    for (int r = 0; r < H; ++r) {
        const float v = (static_cast<float>(r) + 0.5f) / static_cast<float>(H);
        for (int c = 0; c < W; ++c) {
            const float u = (static_cast<float>(c) + 0.5f) / static_cast<float>(W);
            for (int ch = 0; ch < 3; ++ch) {
                const float raw = eval_shader(p.channels[static_cast<std::size_t>(ch)], u, v,
                                              p.seed_params);
                img.at(ch, r, c) = 0.5f * (1.0f + std::sin(static_cast<float>(M_PI) * raw));
            }
        }
    }
    return img;
}

} // namespace bdkd
