#include "secdiv/mir.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace secdiv {

namespace {

constexpr std::string_view kOpcodeNames[] = {"add", "sub", "xor", "and", "or",
                                              "mov", "li",  "ld",  "st",  "beq",
                                              "bne", "b",   "ret", "nop", "copy"};

} // namespace

std::string_view to_string(Label label) {
  switch (label) {
  case Label::Secret:
    return "secret";
  case Label::Public:
    return "public";
  case Label::Random:
    return "random";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "secret")
    return Label::Secret;
  if (text == "public")
    return Label::Public;
  if (text == "random")
    return Label::Random;
  return std::nullopt;
}

std::string_view to_string(Opcode op) { return kOpcodeNames[static_cast<int>(op)]; }

std::optional<Opcode> parse_opcode(std::string_view text) {
  for (std::size_t i = 0; i < std::size(kOpcodeNames); ++i)
    if (kOpcodeNames[i] == text)
      return static_cast<Opcode>(i);
  return std::nullopt;
}

bool is_terminator(Opcode op) {
  return op == Opcode::Beq || op == Opcode::Bne || op == Opcode::B || op == Opcode::Ret;
}

bool is_conditional_branch(Opcode op) { return op == Opcode::Beq || op == Opcode::Bne; }

bool is_alu(Opcode op) {
  return op == Opcode::Add || op == Opcode::Sub || op == Opcode::Xor || op == Opcode::And ||
         op == Opcode::Or;
}

bool is_commutative(Opcode op) {
  return op == Opcode::Add || op == Opcode::Xor || op == Opcode::And || op == Opcode::Or ||
         op == Opcode::Beq || op == Opcode::Bne;
}

bool is_memory(Opcode op) { return op == Opcode::Ld || op == Opcode::St; }

bool Operation::commutative() const {
  return is_commutative(opcode) && uses.size() == 2 && !uses[0].is_imm && !uses[1].is_imm;
}

const Operation *Block::terminator() const {
  if (ops.empty() || !is_terminator(ops.back().opcode))
    return nullptr;
  return &ops.back();
}

std::optional<TempId> FunctionIR::find_temp(std::string_view n) const {
  for (std::size_t i = 0; i < temps.size(); ++i)
    if (temps[i].name == n)
      return static_cast<TempId>(i);
  return std::nullopt;
}

std::optional<CellId> FunctionIR::find_cell(std::string_view n) const {
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].name == n)
      return static_cast<CellId>(i);
  return std::nullopt;
}

const Operation *FunctionIR::find_op(std::uint32_t id) const {
  for (const auto &b : blocks)
    for (const auto &op : b.ops)
      if (op.id == id)
        return &op;
  return nullptr;
}

std::uint32_t FunctionIR::next_op_id() const {
  std::uint32_t next = 0;
  for (const auto &b : blocks)
    for (const auto &op : b.ops)
      next = std::max(next, op.id + 1);
  return next;
}

std::size_t FunctionIR::op_count() const {
  std::size_t n = 0;
  for (const auto &b : blocks)
    n += b.ops.size();
  return n;
}

std::vector<TempId> FunctionIR::register_inputs() const {
  std::vector<TempId> out;
  for (const auto &in : inputs)
    if (!in.in_memory)
      out.push_back(in.index);
  return out;
}

std::string FunctionIR::input_name(const Input &in) const {
  return in.in_memory ? "@" + cells[in.index].name : temps[in.index].name;
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string &msg)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
      line_(line), column_(column) {}

Rational parse_rational(std::string_view text) {
  auto parse_int = [](std::string_view s) -> std::optional<std::int64_t> {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      return std::nullopt;
    return v;
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto n = parse_int(text.substr(0, slash));
    auto d = parse_int(text.substr(slash + 1));
    if (!n || !d || *d == 0)
      throw std::invalid_argument("bad rational '" + std::string(text) + "'");
    return Rational(*n, *d);
  }
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    auto whole = parse_int(text.substr(0, dot));
    auto frac_text = text.substr(dot + 1);
    auto frac = parse_int(frac_text);
    if (!whole || !frac || frac_text.empty() || frac_text.size() > 9)
      throw std::invalid_argument("bad rational '" + std::string(text) + "'");
    std::int64_t scale = 1;
    for (std::size_t i = 0; i < frac_text.size(); ++i)
      scale *= 10;
    return Rational(*whole * scale + *frac, scale);
  }
  auto v = parse_int(text);
  if (!v)
    throw std::invalid_argument("bad rational '" + std::string(text) + "'");
  return Rational(*v);
}

std::string format_rational(const Rational &r) {
  if (r.denominator() == 1)
    return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

// ---------------------------------------------------------------------------
// Lexer and parser

namespace {

struct Token {
  enum Kind { Ident, Cell, Number, Punct } kind;
  std::string text;
  std::size_t column;
};

std::vector<Token> tokenize(std::string_view line, std::size_t lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto ident_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  };
  while (i < line.size()) {
    char c = line[i];
    if (c == '#')
      break;
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) ||
                                 line[i] == '/' || line[i] == '.'))
        ++i;
      out.push_back({Token::Number, std::string(line.substr(start, i - start)), start + 1});
    } else if (c == '@') {
      ++i;
      while (i < line.size() && ident_char(line[i]))
        ++i;
      if (i == start + 1)
        throw ParseError(lineno, start + 1, "expected cell name after '@'");
      out.push_back({Token::Cell, std::string(line.substr(start + 1, i - start - 1)), start + 1});
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < line.size() && ident_char(line[i]))
        ++i;
      out.push_back({Token::Ident, std::string(line.substr(start, i - start)), start + 1});
    } else if (c == '=' || c == ',' || c == '(' || c == ')' || c == ':') {
      ++i;
      out.push_back({Token::Punct, std::string(1, c), start + 1});
    } else {
      throw ParseError(lineno, start + 1, std::string("unexpected character '") + c + "'");
    }
  }
  return out;
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size())
    return std::nullopt;
  return v;
}

class Parser {
public:
  explicit Parser(std::string_view text) : text_(text) {}

  FunctionIR run() {
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      auto nl = text_.find('\n', pos);
      auto line = text_.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                  : nl - pos);
      ++lineno;
      parse_line(tokenize(line, lineno), lineno);
      if (nl == std::string_view::npos)
        break;
      pos = nl + 1;
    }
    if (!have_header_)
      throw ParseError(lineno, 1, "missing 'func' header");
    if (f_.blocks.empty())
      throw ParseError(lineno, 1, "function has no blocks");
    validate(f_);
    return std::move(f_);
  }

private:
  std::string_view text_;
  FunctionIR f_;
  bool have_header_ = false;
  std::uint32_t next_id_ = 0;

  [[noreturn]] void fail(std::size_t line, const Token &t, const std::string &msg) {
    throw ParseError(line, t.column, msg);
  }

  void expect_punct(const std::vector<Token> &toks, std::size_t i, char c, std::size_t line) {
    if (i >= toks.size())
      throw ParseError(line, toks.empty() ? 1 : toks.back().column + toks.back().text.size(),
                       std::string("expected '") + c + "'");
    if (toks[i].kind != Token::Punct || toks[i].text[0] != c)
      fail(line, toks[i], std::string("expected '") + c + "', got '" + toks[i].text + "'");
  }

  void parse_line(const std::vector<Token> &toks, std::size_t line) {
    if (toks.empty())
      return;
    const Token &head = toks[0];
    if (head.kind == Token::Ident && head.text == "func") {
      parse_header(toks, line);
      return;
    }
    if (!have_header_)
      fail(line, head, "expected 'func' header before any block");
    if (head.kind == Token::Ident && head.text == "block") {
      parse_block_header(toks, line);
      return;
    }
    if (f_.blocks.empty())
      fail(line, head, "operation outside of a block");
    parse_op(toks, line);
  }

  void parse_header(const std::vector<Token> &toks, std::size_t line) {
    if (have_header_)
      fail(line, toks[0], "duplicate 'func' header");
    if (toks.size() < 2 || toks[1].kind != Token::Ident)
      throw ParseError(line, toks[0].column, "expected function name");
    f_.name = toks[1].text;
    expect_punct(toks, 2, '(', line);
    std::size_t i = 3;
    bool first = true;
    while (true) {
      if (i >= toks.size())
        throw ParseError(line, toks.back().column, "unterminated parameter list");
      if (toks[i].kind == Token::Punct && toks[i].text == ")")
        break;
      if (!first) {
        expect_punct(toks, i, ',', line);
        ++i;
      }
      first = false;
      if (i >= toks.size() || (toks[i].kind != Token::Ident && toks[i].kind != Token::Cell))
        throw ParseError(line, i < toks.size() ? toks[i].column : toks.back().column,
                         "expected parameter name");
      const Token &name = toks[i];
      ++i;
      if (i >= toks.size() || toks[i].kind != Token::Punct || toks[i].text != ":")
        throw ValidationError("unlabeled input '" + name.text + "'");
      ++i;
      if (i >= toks.size() || toks[i].kind != Token::Ident)
        throw ParseError(line, toks[i - 1].column, "expected security label");
      auto label = parse_label(toks[i].text);
      if (!label)
        fail(line, toks[i], "unknown security label '" + toks[i].text + "'");
      ++i;
      if (name.kind == Token::Cell) {
        if (f_.find_cell(name.text))
          fail(line, name, "duplicate input '@" + name.text + "'");
        f_.cells.push_back({name.text, *label});
        f_.inputs.push_back({true, static_cast<CellId>(f_.cells.size() - 1), *label});
      } else {
        if (f_.find_temp(name.text))
          fail(line, name, "duplicate input '" + name.text + "'");
        f_.temps.push_back({name.text, 8, kInputDef, *label});
        f_.inputs.push_back({false, static_cast<TempId>(f_.temps.size() - 1), *label});
      }
    }
    if (i + 1 != toks.size())
      fail(line, toks[i + 1], "trailing tokens after parameter list");
    have_header_ = true;
  }

  void parse_block_header(const std::vector<Token> &toks, std::size_t line) {
    if (toks.size() < 2 || toks[1].kind != Token::Number)
      throw ParseError(line, toks[0].column, "expected block number");
    auto id = parse_uint(toks[1].text);
    if (!id)
      fail(line, toks[1], "bad block number");
    if (*id != f_.blocks.size())
      fail(line, toks[1], "blocks must be numbered consecutively from 0");
    Block b;
    b.id = static_cast<BlockId>(*id);
    if (toks.size() > 2) {
      if (toks[2].kind != Token::Ident || toks[2].text != "weight" || toks.size() != 4)
        fail(line, toks[2], "expected 'weight <w>'");
      try {
        b.weight = parse_rational(toks[3].text);
      } catch (const std::exception &) {
        fail(line, toks[3], "bad weight '" + toks[3].text + "'");
      }
      if (b.weight <= 0)
        throw ValidationError("block " + std::to_string(b.id) + ": weight must be positive");
    }
    f_.blocks.push_back(std::move(b));
  }

  Operand value_operand(const Token &t, std::size_t line) {
    if (t.kind == Token::Number) {
      auto v = parse_uint(t.text);
      if (!v || *v > 255)
        fail(line, t, "immediate out of 8-bit range: '" + t.text + "'");
      return Operand::imm(static_cast<std::uint8_t>(*v));
    }
    if (t.kind == Token::Ident) {
      auto id = f_.find_temp(t.text);
      if (!id)
        fail(line, t, "use of undefined temp '" + t.text + "'");
      return Operand::temp(*id);
    }
    fail(line, t, "expected temp or immediate, got '" + t.text + "'");
  }

  Operand temp_operand(const Token &t, std::size_t line) {
    auto op = value_operand(t, line);
    if (op.is_imm)
      fail(line, t, "expected a temp, got immediate");
    return op;
  }

  CellId cell_operand(const Token &t, std::size_t line) {
    if (t.kind != Token::Cell)
      fail(line, t, "expected memory cell '@name'");
    if (auto id = f_.find_cell(t.text))
      return *id;
    f_.cells.push_back({t.text, std::nullopt});
    return static_cast<CellId>(f_.cells.size() - 1);
  }

  BlockId block_operand(const Token &t, std::size_t line) {
    if (t.kind != Token::Number)
      fail(line, t, "expected block number");
    auto v = parse_uint(t.text);
    if (!v || *v > 0xFFFF)
      fail(line, t, "bad block number '" + t.text + "'");
    return static_cast<BlockId>(*v);
  }

  void parse_op(const std::vector<Token> &toks, std::size_t line) {
    std::size_t i = 0;
    Operation op;
    op.id = next_id_++;
    if (toks[i].kind == Token::Ident && toks[i].text == "opt") {
      op.optional = true;
      ++i;
      if (i >= toks.size())
        throw ParseError(line, toks[0].column, "expected operation after 'opt'");
    }
    std::optional<Token> def_tok;
    if (i + 1 < toks.size() && toks[i + 1].kind == Token::Punct && toks[i + 1].text == "=") {
      if (toks[i].kind != Token::Ident)
        fail(line, toks[i], "expected temp name before '='");
      def_tok = toks[i];
      i += 2;
    }
    if (i >= toks.size() || toks[i].kind != Token::Ident)
      throw ParseError(line, i < toks.size() ? toks[i].column : toks.back().column,
                       "expected opcode");
    auto opcode = parse_opcode(toks[i].text);
    if (!opcode)
      fail(line, toks[i], "unknown opcode '" + toks[i].text + "'");
    op.opcode = *opcode;
    const Token &op_tok = toks[i];
    ++i;

    // comma-separated operand list
    std::vector<Token> args;
    while (i < toks.size()) {
      if (!args.empty()) {
        expect_punct(toks, i, ',', line);
        ++i;
        if (i >= toks.size())
          throw ParseError(line, toks.back().column, "expected operand after ','");
      }
      if (toks[i].kind == Token::Punct)
        fail(line, toks[i], "unexpected '" + toks[i].text + "'");
      args.push_back(toks[i]);
      ++i;
    }

    auto arity = [&](std::size_t n) {
      if (args.size() != n)
        fail(line, op_tok,
             std::string(to_string(op.opcode)) + " expects " + std::to_string(n) +
                 " operand(s), got " + std::to_string(args.size()));
    };
    bool wants_def = false;
    switch (op.opcode) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Xor:
    case Opcode::And:
    case Opcode::Or:
      arity(2);
      op.uses = {temp_operand(args[0], line), value_operand(args[1], line)};
      wants_def = true;
      break;
    case Opcode::Mov:
    case Opcode::Copy:
      arity(1);
      op.uses = {temp_operand(args[0], line)};
      wants_def = true;
      break;
    case Opcode::Li:
      arity(1);
      op.uses = {value_operand(args[0], line)};
      if (!op.uses[0].is_imm)
        fail(line, args[0], "li expects an immediate");
      wants_def = true;
      break;
    case Opcode::Ld:
      arity(1);
      op.cell = cell_operand(args[0], line);
      wants_def = true;
      break;
    case Opcode::St:
      arity(2);
      op.cell = cell_operand(args[0], line);
      op.uses = {temp_operand(args[1], line)};
      break;
    case Opcode::Beq:
    case Opcode::Bne:
      arity(3);
      op.uses = {temp_operand(args[0], line), value_operand(args[1], line)};
      op.target = block_operand(args[2], line);
      break;
    case Opcode::B:
      arity(1);
      op.target = block_operand(args[0], line);
      break;
    case Opcode::Ret:
      arity(1);
      op.uses = {temp_operand(args[0], line)};
      break;
    case Opcode::Nop:
      arity(0);
      break;
    }
    if (wants_def && !def_tok)
      fail(line, op_tok, std::string(to_string(op.opcode)) + " requires a destination temp");
    if (!wants_def && def_tok)
      fail(line, *def_tok, std::string(to_string(op.opcode)) + " does not define a temp");
    if (def_tok) {
      if (f_.find_temp(def_tok->text))
        fail(line, *def_tok, "temp '" + def_tok->text + "' defined twice");
      f_.temps.push_back({def_tok->text, 8, op.id, std::nullopt});
      op.def = static_cast<TempId>(f_.temps.size() - 1);
    }
    f_.blocks.back().ops.push_back(std::move(op));
  }
};

} // namespace

FunctionIR parse_function(std::string_view text) { return Parser(text).run(); }

// ---------------------------------------------------------------------------
// Validation

void validate(FunctionIR &f) {
  const std::size_t n = f.blocks.size();
  if (n == 0)
    throw ValidationError("function has no blocks");
  bool has_ret = false;
  std::map<std::uint32_t, BlockId> op_block;
  for (std::size_t bi = 0; bi < n; ++bi) {
    auto &b = f.blocks[bi];
    if (b.id != bi)
      throw ValidationError("block ids must be consecutive from 0");
    if (b.weight <= 0)
      throw ValidationError("block " + std::to_string(bi) + ": weight must be positive");
    for (std::size_t oi = 0; oi < b.ops.size(); ++oi) {
      const auto &op = b.ops[oi];
      if (is_terminator(op.opcode) && oi + 1 != b.ops.size())
        throw ValidationError("block " + std::to_string(bi) + ": terminator '" +
                              std::string(to_string(op.opcode)) +
                              "' must be the last operation");
      if (op.optional && op.opcode != Opcode::Copy && op.opcode != Opcode::Li &&
          op.opcode != Opcode::Nop)
        throw ValidationError("operation " + std::to_string(op.id) +
                              ": only copy, li and nop may be optional");
      if (!op_block.emplace(op.id, static_cast<BlockId>(bi)).second)
        throw ValidationError("duplicate operation id " + std::to_string(op.id));
      if (op.opcode == Opcode::Ret)
        has_ret = true;
    }
    b.successors.clear();
    const Operation *term = b.terminator();
    auto fallthrough = [&]() {
      if (bi + 1 >= n)
        throw ValidationError("block " + std::to_string(bi) + " falls off the end of the function");
      return static_cast<BlockId>(bi + 1);
    };
    if (term && term->target) {
      BlockId t = *term->target;
      if (t >= n)
        throw ValidationError("block " + std::to_string(bi) + ": branch to unknown block " +
                              std::to_string(t));
      if (t <= bi)
        throw ValidationError("back edge from block " + std::to_string(bi) + " to block " +
                              std::to_string(t) + " (loops are not supported)");
    }
    if (!term) {
      b.successors.push_back(fallthrough());
    } else if (term->opcode == Opcode::B) {
      b.successors.push_back(*term->target);
    } else if (is_conditional_branch(term->opcode)) {
      auto ft = fallthrough();
      if (ft == *term->target)
        throw ValidationError("block " + std::to_string(bi) +
                              ": conditional branch targets its own fall-through block");
      b.successors.push_back(*term->target);
      b.successors.push_back(ft);
    }
  }
  if (!has_ret)
    throw ValidationError("function has no ret");

  for (std::size_t ti = 0; ti < f.temps.size(); ++ti) {
    const auto &t = f.temps[ti];
    if (t.def_site == kInputDef) {
      bool declared = std::any_of(f.inputs.begin(), f.inputs.end(), [&](const Input &in) {
        return !in.in_memory && in.index == ti;
      });
      if (!declared || !t.label)
        throw ValidationError("unlabeled input '" + t.name + "'");
    } else if (!op_block.count(t.def_site)) {
      throw ValidationError("temp '" + t.name + "' has no defining operation");
    }
  }

  // reachability and dominators over the (topologically ordered) blocks
  std::vector<std::vector<BlockId>> preds(n);
  for (const auto &b : f.blocks)
    for (auto s : b.successors)
      preds[s].push_back(b.id);
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, true));
  std::vector<bool> reachable(n, false);
  reachable[0] = true;
  dom[0].assign(n, false);
  dom[0][0] = true;
  for (std::size_t bi = 1; bi < n; ++bi) {
    bool any = false;
    std::vector<bool> acc(n, true);
    for (auto p : preds[bi]) {
      if (!reachable[p])
        continue;
      any = true;
      for (std::size_t k = 0; k < n; ++k)
        acc[k] = acc[k] && dom[p][k];
    }
    if (!any)
      throw ValidationError("block " + std::to_string(bi) + " is unreachable");
    reachable[bi] = true;
    acc[bi] = true;
    dom[bi] = acc;
  }

  // defined-before-use, with dominance across blocks
  std::map<std::uint32_t, std::size_t> op_pos;
  for (const auto &b : f.blocks)
    for (std::size_t oi = 0; oi < b.ops.size(); ++oi)
      op_pos[b.ops[oi].id] = oi;
  auto check_available = [&](TempId t, BlockId ub, std::size_t upos, const Operation &user) {
    const auto &tmp = f.temps.at(t);
    if (tmp.def_site == kInputDef)
      return;
    BlockId db = op_block.at(tmp.def_site);
    bool ok = db == ub ? op_pos.at(tmp.def_site) < upos : dom[ub][db];
    if (!ok)
      throw ValidationError("use of undefined temp '" + tmp.name + "' in operation " +
                            std::to_string(user.id));
  };
  for (const auto &b : f.blocks) {
    for (std::size_t oi = 0; oi < b.ops.size(); ++oi) {
      const auto &op = b.ops[oi];
      if (op.def && f.temps.at(*op.def).def_site != op.id)
        throw ValidationError("temp '" + f.temps[*op.def].name + "' defined twice");
      for (const auto &u : op.uses)
        if (!u.is_imm)
          check_available(u.value, b.id, oi, op);
      if (op.optional && op.opcode == Opcode::Li) {
        // rematerialization: needs a dominating mandatory li of the same constant
        bool found = false;
        for (const auto &ob : f.blocks) {
          for (std::size_t k = 0; k < ob.ops.size() && !found; ++k) {
            const auto &cand = ob.ops[k];
            if (cand.opcode != Opcode::Li || cand.optional || cand.uses[0] != op.uses[0])
              continue;
            found = ob.id == b.id ? k < oi : dom[b.id][ob.id];
          }
        }
        if (!found)
          throw ValidationError("optional li in operation " + std::to_string(op.id) +
                                " has no dominating mandatory li of the same constant");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_function(const FunctionIR &f) {
  std::ostringstream os;
  os << "func " << f.name << "(";
  for (std::size_t i = 0; i < f.inputs.size(); ++i) {
    if (i)
      os << ", ";
    os << f.input_name(f.inputs[i]) << ":" << to_string(f.inputs[i].label);
  }
  os << ")\n";
  auto operand = [&](const Operand &o) {
    return o.is_imm ? std::to_string(o.value) : f.temps[o.value].name;
  };
  for (const auto &b : f.blocks) {
    os << "block " << b.id;
    if (b.weight != Rational(1))
      os << " weight " << format_rational(b.weight);
    os << "\n";
    for (const auto &op : b.ops) {
      os << "  ";
      if (op.optional)
        os << "opt ";
      if (op.def)
        os << f.temps[*op.def].name << " = ";
      os << to_string(op.opcode);
      std::vector<std::string> args;
      if (op.opcode == Opcode::St || op.opcode == Opcode::Ld)
        args.push_back("@" + f.cells[*op.cell].name);
      for (const auto &u : op.uses)
        args.push_back(operand(u));
      if (op.target)
        args.push_back(std::to_string(*op.target));
      for (std::size_t i = 0; i < args.size(); ++i)
        os << (i ? ", " : " ") << args[i];
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// CFG

std::size_t BlockGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto &s : successors)
    n += s.size();
  return n;
}

bool BlockGraph::is_acyclic() const {
  std::vector<std::size_t> indeg(size(), 0);
  for (const auto &s : successors)
    for (auto v : s)
      ++indeg[v];
  std::vector<BlockId> ready;
  for (std::size_t i = 0; i < size(); ++i)
    if (indeg[i] == 0)
      ready.push_back(static_cast<BlockId>(i));
  std::size_t seen = 0;
  while (!ready.empty()) {
    auto v = ready.back();
    ready.pop_back();
    ++seen;
    for (auto w : successors[v])
      if (--indeg[w] == 0)
        ready.push_back(w);
  }
  return seen == size();
}

BlockGraph build_cfg(const FunctionIR &f) {
  BlockGraph g;
  g.successors.resize(f.blocks.size());
  g.predecessors.resize(f.blocks.size());
  for (const auto &b : f.blocks) {
    g.successors[b.id] = b.successors;
    for (auto s : b.successors)
      g.predecessors[s].push_back(b.id);
    if (b.terminator() && b.terminator()->opcode == Opcode::Ret)
      g.exits.push_back(b.id);
  }
  return g;
}

std::vector<std::vector<bool>> dominators(const FunctionIR &f) {
  const std::size_t n = f.blocks.size();
  std::vector<std::vector<BlockId>> preds(n);
  for (const auto &b : f.blocks)
    for (auto s : b.successors)
      preds[s].push_back(b.id);
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, false));
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<bool> acc(n, b != 0);
    for (auto p : preds[b])
      for (std::size_t k = 0; k < n; ++k)
        acc[k] = acc[k] && dom[p][k];
    if (b != 0 && preds[b].empty())
      acc.assign(n, false);
    acc[b] = true;
    dom[b] = acc;
  }
  return dom;
}

std::vector<std::vector<BlockId>> all_paths(const BlockGraph &g, std::size_t limit) {
  std::vector<std::vector<BlockId>> out;
  std::vector<BlockId> cur{g.entry};
  auto rec = [&](auto &&self) -> void {
    if (out.size() >= limit)
      throw std::runtime_error("too many control-flow paths");
    const auto &succ = g.successors[cur.back()];
    if (succ.empty()) {
      out.push_back(cur);
      return;
    }
    for (auto s : succ) {
      cur.push_back(s);
      self(self);
      cur.pop_back();
    }
  };
  rec(rec);
  return out;
}

} // namespace secdiv
