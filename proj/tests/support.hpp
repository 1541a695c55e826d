// Shared helpers for the test binaries: corpus access and a reference
// evaluator that runs the IR directly, without the machine model.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "secdiv/mir.hpp"

namespace testing {

inline std::string corpus_path(const std::string &rel) {
  return std::string(SECDIV_CORPUS) + "/" + rel;
}

inline std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline secdiv::FunctionIR load(const std::string &rel) {
  return secdiv::parse_function(slurp(corpus_path(rel)));
}

inline const std::vector<std::string> &bench_names() {
  static const std::vector<std::string> names = {"masked_xor", "masked_chain", "check_bit",
                                                 "share_value", "mod_exp"};
  return names;
}

inline const std::vector<std::string> &fixture_names() {
  static const std::vector<std::string> names = {
      "masked_broken", "long_arm", "two_exits", "two_branches", "all_public", "empty_ret",
      "diamond",       "unmaskable", "copies",  "cbb_arm"};
  return names;
}

struct IrRun {
  std::uint8_t result = 0;
  std::vector<std::optional<std::uint8_t>> temps; // by temp id, set when computed
  std::vector<secdiv::BlockId> blocks;
};

/// Runs the IR with inputs in declaration order.
inline IrRun eval_ir(const secdiv::FunctionIR &f, const std::vector<std::uint8_t> &in) {
  using namespace secdiv;
  IrRun r;
  r.temps.assign(f.temps.size(), std::nullopt);
  std::vector<std::uint8_t> cells(f.cells.size(), 0);
  for (std::size_t i = 0; i < f.inputs.size(); ++i) {
    if (f.inputs[i].in_memory)
      cells[f.inputs[i].index] = in[i];
    else
      r.temps[f.inputs[i].index] = in[i];
  }
  auto val = [&](const Operand &o) -> std::uint8_t {
    return o.is_imm ? static_cast<std::uint8_t>(o.value) : r.temps[o.value].value();
  };
  BlockId b = 0;
  while (true) {
    r.blocks.push_back(b);
    std::optional<BlockId> next = b + 1;
    for (const auto &op : f.blocks[b].ops) {
      std::uint8_t v = 0;
      switch (op.opcode) {
      case Opcode::Add:
        v = static_cast<std::uint8_t>(val(op.uses[0]) + val(op.uses[1]));
        break;
      case Opcode::Sub:
        v = static_cast<std::uint8_t>(val(op.uses[0]) - val(op.uses[1]));
        break;
      case Opcode::Xor:
        v = val(op.uses[0]) ^ val(op.uses[1]);
        break;
      case Opcode::And:
        v = val(op.uses[0]) & val(op.uses[1]);
        break;
      case Opcode::Or:
        v = val(op.uses[0]) | val(op.uses[1]);
        break;
      case Opcode::Mov:
      case Opcode::Copy:
      case Opcode::Li:
        v = val(op.uses[0]);
        break;
      case Opcode::Ld:
        v = cells[*op.cell];
        break;
      case Opcode::St:
        cells[*op.cell] = val(op.uses[0]);
        break;
      case Opcode::Beq:
        if (val(op.uses[0]) == val(op.uses[1]))
          next = *op.target;
        break;
      case Opcode::Bne:
        if (val(op.uses[0]) != val(op.uses[1]))
          next = *op.target;
        break;
      case Opcode::B:
        next = *op.target;
        break;
      case Opcode::Ret:
        r.result = val(op.uses[0]);
        return r;
      case Opcode::Nop:
        break;
      }
      if (op.def)
        r.temps[*op.def] = v;
    }
    b = *next;
  }
}

/// Random straight-line or if-then function text over a small op mix.
inline std::string random_function(std::mt19937_64 &g, bool allow_branch) {
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(g() % n); };
  static const char *labels[] = {"public", "secret", "random"};
  static const char *ops[] = {"xor", "xor", "xor", "and", "or", "add", "sub"};
  std::ostringstream os;
  std::size_t nin = 2 + pick(3);
  std::vector<std::string> names;
  os << "func gen(";
  for (std::size_t i = 0; i < nin; ++i) {
    names.push_back("i" + std::to_string(i));
    os << (i ? ", " : "") << names.back() << ":" << labels[pick(3)];
  }
  os << ")\nblock 0\n";
  std::size_t nops = 1 + pick(6);
  for (std::size_t k = 0; k < nops; ++k) {
    std::string d = "t" + std::to_string(k);
    std::size_t kind = pick(10);
    if (kind == 0) {
      os << "  " << d << " = li " << pick(256) << "\n";
    } else if (kind == 1) {
      os << "  " << d << " = mov " << names[pick(names.size())] << "\n";
    } else {
      std::string a = names[pick(names.size())];
      std::string b = pick(4) == 0 ? std::to_string(pick(256)) : names[pick(names.size())];
      os << "  " << d << " = " << ops[pick(7)] << " " << a << ", " << b << "\n";
    }
    names.push_back(d);
  }
  if (allow_branch && pick(2)) {
    os << "  st @c, " << names.back() << "\n";
    os << "  beq " << names[pick(nin)] << ", " << pick(4) << ", 2\n";
    os << "block 1\n  u = xor " << names[pick(names.size())] << ", 1\n  st @c, u\n";
    os << "block 2\n  r = ld @c\n  ret r\n";
  } else {
    os << "  ret " << names.back() << "\n";
  }
  return os.str();
}

} // namespace testing
