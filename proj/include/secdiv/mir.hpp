#ifndef SECDIV_MIR_HPP
#define SECDIV_MIR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

namespace secdiv {

using Rational = boost::rational<std::int64_t>;

enum class Label { Secret, Public, Random };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view text);

enum class Opcode { Add, Sub, Xor, And, Or, Mov, Li, Ld, St, Beq, Bne, B, Ret, Nop, Copy };

std::string_view to_string(Opcode op);
std::optional<Opcode> parse_opcode(std::string_view text);

bool is_terminator(Opcode op);
bool is_conditional_branch(Opcode op);
bool is_alu(Opcode op);
bool is_commutative(Opcode op);
bool is_memory(Opcode op);

using TempId = std::uint32_t;
using CellId = std::uint32_t;
using BlockId = std::uint32_t;

/// A use of a value: either a temp or an 8-bit immediate.
struct Operand {
  bool is_imm = false;
  std::uint32_t value = 0;

  static Operand temp(TempId id) { return {false, id}; }
  static Operand imm(std::uint8_t v) { return {true, v}; }

  bool operator==(const Operand &) const = default;
};

struct Operation {
  std::uint32_t id = 0;
  Opcode opcode = Opcode::Nop;
  std::vector<Operand> uses;
  std::optional<TempId> def;
  bool optional = false;
  std::optional<BlockId> target; // BEQ/BNE/B
  std::optional<CellId> cell;    // LD/ST

  bool commutative() const;
  bool operator==(const Operation &) const = default;
};

struct Block {
  BlockId id = 0;
  std::vector<Operation> ops;
  Rational weight{1};
  std::vector<BlockId> successors; // derived by validation, taken target first

  const Operation *terminator() const;
  bool operator==(const Block &) const = default;
};

constexpr std::uint32_t kInputDef = 0xFFFFFFFFu;

struct Temp {
  std::string name;
  std::uint32_t width = 8;
  std::uint32_t def_site = kInputDef; // operation id, or kInputDef for inputs
  std::optional<Label> label;         // inputs only

  bool operator==(const Temp &) const = default;
};

struct Cell {
  std::string name;
  std::optional<Label> label; // memory inputs only

  bool operator==(const Cell &) const = default;
};

/// One declared function input: a register-passed temp or a memory cell.
struct Input {
  bool in_memory = false;
  std::uint32_t index = 0; // TempId or CellId
  Label label = Label::Public;

  bool operator==(const Input &) const = default;
};

struct FunctionIR {
  std::string name;
  std::vector<Block> blocks;
  std::vector<Input> inputs;
  std::vector<Temp> temps;
  std::vector<Cell> cells;

  std::optional<TempId> find_temp(std::string_view name) const;
  std::optional<CellId> find_cell(std::string_view name) const;
  const Operation *find_op(std::uint32_t id) const;
  std::uint32_t next_op_id() const;
  std::size_t op_count() const;
  /// Register-passed inputs in declaration order; input i arrives in register i.
  std::vector<TempId> register_inputs() const;
  std::string input_name(const Input &in) const;

  bool operator==(const FunctionIR &) const = default;
};

class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, std::size_t column, const std::string &msg);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

FunctionIR parse_function(std::string_view text);
std::string serialize_function(const FunctionIR &f);

/// Recomputes successors and checks every structural invariant. Throws
/// ValidationError naming the violated invariant.
void validate(FunctionIR &f);

struct BlockGraph {
  std::vector<std::vector<BlockId>> successors;
  std::vector<std::vector<BlockId>> predecessors;
  BlockId entry = 0;
  std::vector<BlockId> exits;

  std::size_t size() const { return successors.size(); }
  std::size_t edge_count() const;
  bool is_acyclic() const;
};

BlockGraph build_cfg(const FunctionIR &f);

/// dom[b][d] is true when block d dominates block b.
std::vector<std::vector<bool>> dominators(const FunctionIR &f);

/// All entry-to-exit block paths of a loop-free graph.
std::vector<std::vector<BlockId>> all_paths(const BlockGraph &g,
                                            std::size_t limit = 4096);

Rational parse_rational(std::string_view text);
std::string format_rational(const Rational &r);

} // namespace secdiv

#endif
