#ifndef BDKD_SHADER_HPP
#define BDKD_SHADER_HPP

#include <array>
#include <string>
#include <vector>

#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// Node kinds of the shader expression language. Terminals carry no children;
/// Lit additionally carries a numeric value.
enum class ShaderOp : std::uint8_t {
    // terminals
    U, V, S0, S1, S2, S3, Lit,
    // unary
    Sin, Cos, Abs, Fract, Floor,
    // binary
    Add, Sub, Mul, Div, Min, Max, Pow, Step, Length2, Mod,
    // ternary
    Mix, Noise,
};

int shader_op_arity(ShaderOp op);

/// Expression tree. Division, mod and pow are protected (total on finite
/// inputs) and every non-terminal result is clamped to +-1e9 with non-finite
/// values mapped to 0, so evaluation never produces NaN/Inf.
struct ShaderExpr {
    ShaderOp op = ShaderOp::Lit;
    float literal = 0.0f;
    std::vector<ShaderExpr> kids;

    int depth() const;
    bool operator==(const ShaderExpr&) const = default;
};

/// Three channel expressions (identical when a single-expression source is
/// broadcast) plus the four seed parameters bound to s0..s3.
struct ShaderProgram {
    std::array<ShaderExpr, 3> channels;
    std::array<float, 4> seed_params{0.0f, 0.0f, 0.0f, 0.0f};
};

/// Raw (pre-squash) evaluation of one expression at normalized coordinates.
float eval_shader(const ShaderExpr& e, float u, float v, const std::array<float, 4>& s);

/// Parses 1-3 semicolon-separated channel expressions. Errors carry
/// line:column and what was expected at that point.
ShaderProgram parse_shader(const std::string& source);

/// Canonical source text; parse(print(p)) reproduces p exactly (floats are
/// printed shortest-round-trip).
std::string print_shader(const ShaderProgram& p);

/// Grammar-directed random sampling; terminal probability rises with depth so
/// trees stay finite, max_depth is a hard bound.
ShaderProgram random_program(Rng& rng, int max_depth);

/// Rasterizes at pixel centers u=(c+0.5)/W, v=(r+0.5)/H, then squashes each
/// channel by x -> 0.5*(1+sin(pi*x)) into [0,1]. Returns [3,H,W].
Tensor render_shader(const ShaderProgram& p, int H, int W);

} // namespace bdkd

#endif
