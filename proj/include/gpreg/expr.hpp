#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpreg/rng.hpp"

namespace gpreg {

// Node tags of the coordinate-transform language. Arity is fixed per tag.
enum class Op : std::uint8_t {
  Add, Sub, Mul, Div, Pow,  // arity 2
  Cos, Sin, RotX, RotY,     // arity 1
  Rbf, Irbf,                // arity 3
  Const, VarX, VarY, E,     // terminals
};

int arity(Op op);
std::string_view op_name(Op op);

// Expression tree with value semantics: copying a tree copies the whole
// structure, so genetic operators can hand out subtrees freely.
// Invariant: children.size() == arity(op).
struct Expr {
  Op op = Op::VarX;
  double value = 0.0;  // payload of Const, ignored otherwise
  std::vector<Expr> children;
};

// Structural equality (Const compares by value, other payloads ignored).
bool operator==(const Expr& a, const Expr& b);

// Convenience builders.
Expr constant(double value);
Expr var_x();
Expr var_y();
Expr euler();
Expr node(Op op, std::vector<Expr> children);

// Pixel position plus the dimensions of the image being transformed; the
// rotation primitives take their center from these dimensions.
struct EvalContext {
  double x = 0.0;
  double y = 0.0;
  int width = 1;
  int height = 1;
};

struct ImageDims {
  int width = 1;
  int height = 1;
};

// Every node result is clamped into [-kEvalClamp, kEvalClamp].
constexpr double kEvalClamp = 1e8;
// Protected division / inverse-RBF threshold.
constexpr double kProtectEpsilon = 1e-9;
// pow exponents are clamped into [-kPowExponentLimit, kPowExponentLimit].
constexpr double kPowExponentLimit = 20.0;

// Total, protected interpretation: never returns NaN or +/-Inf for finite
// contexts. The three-argument form additionally reports whether any
// intermediate went non-finite before clamping (a should-not-happen guard;
// callers treat such trees as invalid).
double eval(const Expr& tree, const EvalContext& ctx);
double eval(const Expr& tree, const EvalContext& ctx, bool& nonfinite);

enum class GenMethod { Grow, Full };

// Random tree of depth <= max_depth (root has depth 1). Full places
// functions at every level before max_depth; Grow draws uniformly over the
// whole tag set. Constants are uniform in +/- max(width, height).
Expr random_tree(Rng& rng, int max_depth, ImageDims dims, GenMethod method);

int depth(const Expr& tree);
int node_count(const Expr& tree);

// Pre-order numbering: root is 0, children follow depth-first left to right.
// Both throw std::out_of_range for bad indices.
const Expr& node_at(const Expr& tree, int index);
Expr replace_at(const Expr& tree, int index, Expr subtree);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : std::runtime_error(message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Prefix s-expression, e.g. "(add (sub (const 0.47) (const 5.11)) x)".
// Constants print with shortest round-trip-exact precision; parse/serialize
// are mutually inverse on valid input.
std::string serialize(const Expr& tree);
Expr parse(std::string_view text);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

// One-line chromosome text: "TX := <s-expr> ; TY := <s-expr>".
std::string format_chromosome_line(const Expr& tx, const Expr& ty);
std::pair<Expr, Expr> parse_chromosome_line(std::string_view line);

}  // namespace gpreg
