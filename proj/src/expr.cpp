#include "gpreg/expr.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <charconv>
#include <cmath>
#include <numbers>

namespace gpreg {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
  int arity;
};

constexpr std::array<OpInfo, 15> kOpTable = {{
    {Op::Add, "add", 2},
    {Op::Sub, "sub", 2},
    {Op::Mul, "mul", 2},
    {Op::Div, "div", 2},
    {Op::Pow, "pow", 2},
    {Op::Cos, "cos", 1},
    {Op::Sin, "sin", 1},
    {Op::RotX, "rotx", 1},
    {Op::RotY, "roty", 1},
    {Op::Rbf, "rbf", 3},
    {Op::Irbf, "irbf", 3},
    {Op::Const, "const", 0},
    {Op::VarX, "x", 0},
    {Op::VarY, "y", 0},
    {Op::E, "e", 0},
}};

const OpInfo& info(Op op) { return kOpTable[static_cast<std::size_t>(op)]; }

constexpr std::array<Op, 11> kFunctionOps = {
    Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow, Op::Cos,
    Op::Sin, Op::RotX, Op::RotY, Op::Rbf, Op::Irbf};
constexpr std::array<Op, 4> kTerminalOps = {Op::Const, Op::VarX, Op::VarY, Op::E};

double clamp_result(double v, bool& nonfinite) {
  if (!std::isfinite(v)) {
    nonfinite = true;
    if (std::isnan(v)) return 0.0;
    return v > 0.0 ? kEvalClamp : -kEvalClamp;
  }
  return std::clamp(v, -kEvalClamp, kEvalClamp);
}

double eval_node(const Expr& e, const EvalContext& c, bool& nonfinite) {
  double r = 0.0;
  switch (e.op) {
    case Op::Const:
      r = e.value;
      break;
    case Op::VarX:
      r = c.x;
      break;
    case Op::VarY:
      r = c.y;
      break;
    case Op::E:
      r = std::numbers::e;
      break;
    case Op::Add:
      r = eval_node(e.children[0], c, nonfinite) + eval_node(e.children[1], c, nonfinite);
      break;
    case Op::Sub:
      r = eval_node(e.children[0], c, nonfinite) - eval_node(e.children[1], c, nonfinite);
      break;
    case Op::Mul:
      r = eval_node(e.children[0], c, nonfinite) * eval_node(e.children[1], c, nonfinite);
      break;
    case Op::Div: {
      const double num = eval_node(e.children[0], c, nonfinite);
      const double den = eval_node(e.children[1], c, nonfinite);
      r = std::fabs(den) < kProtectEpsilon ? 1.0 : num / den;
      break;
    }
    case Op::Pow: {
      // |a|^b with the exponent clamped; explicit zero-base handling keeps
      // the result finite for negative exponents.
      const double base = std::fabs(eval_node(e.children[0], c, nonfinite));
      const double expo = std::clamp(eval_node(e.children[1], c, nonfinite),
                                     -kPowExponentLimit, kPowExponentLimit);
      if (base == 0.0) {
        r = expo == 0.0 ? 1.0 : (expo > 0.0 ? 0.0 : kEvalClamp);
      } else {
        r = std::pow(base, expo);
      }
      break;
    }
    case Op::Cos:
      r = std::cos(eval_node(e.children[0], c, nonfinite));
      break;
    case Op::Sin:
      r = std::sin(eval_node(e.children[0], c, nonfinite));
      break;
    case Op::RotX: {
      const double angle = eval_node(e.children[0], c, nonfinite);
      const double cx = c.width / 2.0;
      const double cy = c.height / 2.0;
      r = (c.x - cx) * std::cos(angle) - (c.y - cy) * std::sin(angle) + cx;
      break;
    }
    case Op::RotY: {
      const double angle = eval_node(e.children[0], c, nonfinite);
      const double cx = c.width / 2.0;
      const double cy = c.height / 2.0;
      r = (c.y - cy) * std::cos(angle) + (c.x - cx) * std::sin(angle) + cy;
      break;
    }
    case Op::Rbf:
    case Op::Irbf: {
      const double c1 = eval_node(e.children[0], c, nonfinite);
      const double c2 = eval_node(e.children[1], c, nonfinite);
      const double c3 = eval_node(e.children[2], c, nonfinite);
      const double dx = c.x - c1;
      const double dy = c.y - c2;
      const double radical = std::sqrt(dx * dx + dy * dy + c3 * c3);
      if (e.op == Op::Rbf) {
        r = radical;
      } else {
        r = radical < kProtectEpsilon ? kEvalClamp : 1.0 / radical;
      }
      break;
    }
  }
  return clamp_result(r, nonfinite);
}

Expr make_terminal(Op op, Rng& rng, ImageDims dims) {
  Expr e;
  e.op = op;
  if (op == Op::Const) {
    const double bound = static_cast<double>(std::max(dims.width, dims.height));
    e.value = rand_real(rng, -bound, bound);
  }
  return e;
}

Expr gen_tree(Rng& rng, int remaining, ImageDims dims, GenMethod method) {
  Op op;
  if (remaining <= 1) {
    op = kTerminalOps[rand_index(rng, kTerminalOps.size())];
  } else if (method == GenMethod::Full) {
    op = kFunctionOps[rand_index(rng, kFunctionOps.size())];
  } else {
    const std::size_t pick =
        rand_index(rng, kFunctionOps.size() + kTerminalOps.size());
    op = pick < kFunctionOps.size() ? kFunctionOps[pick]
                                    : kTerminalOps[pick - kFunctionOps.size()];
  }
  if (arity(op) == 0) return make_terminal(op, rng, dims);
  Expr e;
  e.op = op;
  const int n = arity(op);
  e.children.reserve(n);
  for (int i = 0; i < n; ++i) {
    e.children.push_back(gen_tree(rng, remaining - 1, dims, method));
  }
  return e;
}

const Expr* find_node(const Expr& e, int& index) {
  if (index == 0) return &e;
  --index;
  for (const Expr& child : e.children) {
    if (const Expr* hit = find_node(child, index)) return hit;
  }
  return nullptr;
}

bool replace_node(Expr& e, int& index, Expr& subtree) {
  if (index == 0) {
    e = std::move(subtree);
    return true;
  }
  --index;
  for (Expr& child : e.children) {
    if (replace_node(child, index, subtree)) return true;
  }
  return false;
}

void write_sexpr(const Expr& e, std::string& out) {
  switch (e.op) {
    case Op::VarX:
      out += 'x';
      return;
    case Op::VarY:
      out += 'y';
      return;
    case Op::E:
      out += 'e';
      return;
    case Op::Const:
      out += "(const ";
      out += format_double(e.value);
      out += ')';
      return;
    default:
      out += '(';
      out += op_name(e.op);
      for (const Expr& child : e.children) {
        out += ' ';
        write_sexpr(child, out);
      }
      out += ')';
  }
}

bool is_atom_char(char c) {
  return c != '(' && c != ')' && !std::isspace(static_cast<unsigned char>(c));
}

struct Parser {
  std::string_view text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= text.size();
  }

  std::string_view read_atom() {
    const std::size_t start = pos;
    while (pos < text.size() && is_atom_char(text[pos])) ++pos;
    if (pos == start) throw ParseError("expected symbol", start);
    return text.substr(start, pos - start);
  }

  const OpInfo* lookup(std::string_view name) {
    for (const OpInfo& oi : kOpTable) {
      if (oi.name == name) return &oi;
    }
    return nullptr;
  }

  double read_number() {
    skip_ws();
    const std::size_t start = pos;
    if (pos >= text.size() || text[pos] == '(' || text[pos] == ')') {
      throw ParseError("const expects a numeric argument", start);
    }
    const std::string_view tok = read_atom();
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ParseError("malformed number '" + std::string(tok) + "'", start);
    }
    if (!std::isfinite(v)) {
      throw ParseError("non-finite constant '" + std::string(tok) + "'", start);
    }
    return v;
  }

  Expr parse_expr() {
    skip_ws();
    if (pos >= text.size()) throw ParseError("unexpected end of input", pos);
    if (text[pos] == ')') throw ParseError("unexpected ')'", pos);

    if (text[pos] != '(') {
      const std::size_t start = pos;
      const std::string_view atom = read_atom();
      const OpInfo* oi = lookup(atom);
      if (oi == nullptr || arity(oi->op) != 0 || oi->op == Op::Const) {
        throw ParseError("unknown symbol '" + std::string(atom) + "'", start);
      }
      Expr e;
      e.op = oi->op;
      if (e.op == Op::E) e.value = std::numbers::e;
      return e;
    }

    ++pos;  // '('
    skip_ws();
    if (pos >= text.size() || !is_atom_char(text[pos])) {
      throw ParseError("expected tag after '('", pos);
    }
    const std::size_t tag_pos = pos;
    const std::string_view tag = read_atom();
    const OpInfo* oi = lookup(tag);
    if (oi == nullptr) {
      throw ParseError("unknown tag '" + std::string(tag) + "'", tag_pos);
    }

    Expr e;
    e.op = oi->op;
    if (e.op == Op::Const) {
      e.value = read_number();
    } else if (oi->arity == 0) {
      // bare terminals are written without parentheses
      throw ParseError("'" + std::string(tag) + "' takes no arguments", tag_pos);
    } else {
      e.children.reserve(oi->arity);
      while (true) {
        skip_ws();
        if (pos < text.size() && text[pos] == ')') break;
        if (pos >= text.size()) throw ParseError("missing ')'", pos);
        e.children.push_back(parse_expr());
      }
      if (static_cast<int>(e.children.size()) != oi->arity) {
        throw ParseError("'" + std::string(tag) + "' expects " +
                             std::to_string(oi->arity) + " children, got " +
                             std::to_string(e.children.size()),
                         tag_pos);
      }
    }
    skip_ws();
    if (pos >= text.size() || text[pos] != ')') {
      throw ParseError("missing ')'", pos);
    }
    ++pos;
    return e;
  }
};

}  // namespace

int arity(Op op) { return info(op).arity; }

std::string_view op_name(Op op) { return info(op).name; }

bool operator==(const Expr& a, const Expr& b) {
  if (a.op != b.op) return false;
  if (a.op == Op::Const && a.value != b.value) return false;
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!(a.children[i] == b.children[i])) return false;
  }
  return true;
}

Expr constant(double value) {
  Expr e;
  e.op = Op::Const;
  e.value = value;
  return e;
}

Expr var_x() { return Expr{Op::VarX, 0.0, {}}; }
Expr var_y() { return Expr{Op::VarY, 0.0, {}}; }
Expr euler() { return Expr{Op::E, 0.0, {}}; }

Expr node(Op op, std::vector<Expr> children) {
  Expr e;
  e.op = op;
  e.children = std::move(children);
  assert(static_cast<int>(e.children.size()) == arity(op));
  return e;
}

double eval(const Expr& tree, const EvalContext& ctx) {
  bool nonfinite = false;
  return eval_node(tree, ctx, nonfinite);
}

double eval(const Expr& tree, const EvalContext& ctx, bool& nonfinite) {
  return eval_node(tree, ctx, nonfinite);
}

Expr random_tree(Rng& rng, int max_depth, ImageDims dims, GenMethod method) {
  assert(max_depth >= 1);
  return gen_tree(rng, max_depth, dims, method);
}

int depth(const Expr& tree) {
  int d = 0;
  for (const Expr& child : tree.children) d = std::max(d, depth(child));
  return d + 1;
}

int node_count(const Expr& tree) {
  int n = 1;
  for (const Expr& child : tree.children) n += node_count(child);
  return n;
}

const Expr& node_at(const Expr& tree, int index) {
  if (index >= 0) {
    int i = index;
    if (const Expr* hit = find_node(tree, i)) return *hit;
  }
  throw std::out_of_range("node index " + std::to_string(index) +
                          " out of range (tree has " +
                          std::to_string(node_count(tree)) + " nodes)");
}

Expr replace_at(const Expr& tree, int index, Expr subtree) {
  Expr out = tree;
  int i = index;
  if (index < 0 || !replace_node(out, i, subtree)) {
    throw std::out_of_range("node index " + std::to_string(index) +
                            " out of range (tree has " +
                            std::to_string(node_count(tree)) + " nodes)");
  }
  return out;
}

std::string serialize(const Expr& tree) {
  std::string out;
  write_sexpr(tree, out);
  return out;
}

Expr parse(std::string_view text) {
  Parser p{text};
  Expr e = p.parse_expr();
  if (!p.at_end()) throw ParseError("trailing input", p.pos);
  return e;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_chromosome_line(const Expr& tx, const Expr& ty) {
  return "TX := " + serialize(tx) + " ; TY := " + serialize(ty);
}

std::pair<Expr, Expr> parse_chromosome_line(std::string_view line) {
  const std::size_t tx_pos = line.find("TX :=");
  const std::size_t sep = line.find(" ; TY :=");
  if (tx_pos == std::string_view::npos || sep == std::string_view::npos || sep < tx_pos) {
    throw ParseError("expected 'TX := <expr> ; TY := <expr>'", 0);
  }
  const std::string_view tx_text = line.substr(tx_pos + 5, sep - (tx_pos + 5));
  const std::string_view ty_text = line.substr(sep + 8);
  return {parse(tx_text), parse(ty_text)};
}

}  // namespace gpreg
