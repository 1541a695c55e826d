#ifndef SECDIV_MACHINE_HPP
#define SECDIV_MACHINE_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "secdiv/mir.hpp"

namespace secdiv {

struct MachineProfile {
  std::string name;
  unsigned num_registers = 8;
  unsigned mem_slots = 4;
  std::array<unsigned, 15> latency{}; // indexed by Opcode
  unsigned taken_branch_overhead = 2;
  unsigned not_taken_cost = 1;
  unsigned spill_access_cost = 2; // per operand held in a spill slot

  unsigned lat(Opcode op) const { return latency[static_cast<int>(op)]; }
  unsigned locations() const { return num_registers + mem_slots; }
};

const MachineProfile &tight8();
const MachineProfile &wide32();
/// Throws std::invalid_argument for unknown names.
const MachineProfile &profile_by_name(std::string_view name);

/// Opcode byte values of the 4-byte instruction word. Bit 7 of the opcode
/// byte flags an immediate last source operand.
enum class MOp : std::uint8_t {
  Nop = 0, Add, Sub, Xor, And, Or, Mov, Li, Ld, St, Beq, Bne, B, Ret
};

constexpr std::uint8_t kImmFlag = 0x80;
constexpr std::uint8_t kSlotFlag = 0x80; // operand byte of a spill-slot location

std::string_view to_string(MOp op);
bool is_control(MOp op);

/// Operand layout:
///   ALU      a=dst b=src1 c=src2|imm
///   MOV      a=dst b=src
///   LI       a=dst c=imm
///   LD       a=dst b=cell      ST  a=cell b=src
///   BEQ/BNE  a=src1 b=src2|imm c=target word
///   B        a|b<<8 = target word
///   RET      a=src
struct Instr {
  MOp op = MOp::Nop;
  bool imm = false;
  std::uint8_t a = 0, b = 0, c = 0;

  bool operator==(const Instr &) const = default;
};

std::uint32_t encode_word(const Instr &i);
/// Throws std::runtime_error on an invalid opcode byte.
Instr decode_word(std::uint32_t w);

struct InputBinding {
  bool in_memory = false;
  std::uint8_t index = 0; // register or data cell
  Label label = Label::Public;

  bool operator==(const InputBinding &) const = default;
};

struct MachineProgram {
  std::string profile;
  std::string function;
  std::vector<InputBinding> inputs;
  std::uint16_t data_cells = 0;
  std::vector<std::uint32_t> block_offsets; // word index of each block
  std::vector<std::uint32_t> words;

  std::size_t block_size(std::size_t b) const;
  bool operator==(const MachineProgram &) const = default;
};

std::vector<std::uint8_t> dump_program(const MachineProgram &m);
MachineProgram load_program(std::span<const std::uint8_t> bytes);

/// Per-operation decisions of a scheduled and allocated function, indexed by
/// operation id; locations indexed by temp id (slot k is num_registers + k).
struct OpChoice {
  bool active = true;
  int cycle = 0;
  int instr = 0; // MOV/COPY: 0 mov, 1 add #0, 2 or #0
  bool swap = false;

  bool operator==(const OpChoice &) const = default;
};

struct Assignment {
  std::vector<OpChoice> ops;
  std::vector<int> loc;

  bool operator==(const Assignment &) const = default;
};

class EncodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Emits active operations in cycle order per block; idle cycles become NOPs.
MachineProgram encode(const FunctionIR &f, const Assignment &a, const MachineProfile &p);

/// Effective latency of one instruction, including spill-slot operand accesses
/// (branch-taken overhead excluded).
unsigned instr_latency(const Instr &i, const MachineProfile &p);

struct Decoded {
  std::vector<Instr> code;
  std::vector<std::uint32_t> block_of; // word index -> block
  const MachineProgram *program = nullptr;
};

Decoded decode_program(const MachineProgram &m);

/// Static cost of a block: sum of its instruction latencies.
unsigned block_cost(const Decoded &d, std::size_t block, const MachineProfile &p);

enum class EventKind : std::uint8_t { RegWrite, BusUpdate };

struct Event {
  std::uint32_t address = 0; // byte address
  EventKind kind = EventKind::RegWrite;
  std::uint8_t index = 0; // register; 0 for the bus
  std::uint8_t old_value = 0;
  std::uint8_t new_value = 0;
};

struct Step {
  std::uint32_t address = 0;
  std::uint64_t cycle = 0;
  std::vector<std::uint8_t> registers; // after the instruction
  std::uint8_t bus = 0;
};

struct ExecTrace {
  std::vector<Step> steps;
  std::vector<Event> events;
  std::vector<std::uint32_t> blocks; // executed block sequence
  std::uint64_t cycles = 0;
  std::uint8_t result = 0;
};

struct RunResult {
  std::uint8_t result = 0;
  std::uint64_t cycles = 0;
};

class ExecError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct MachineState {
  std::array<std::uint8_t, 32> regs{};
  std::array<std::uint8_t, 16> slots{};
  std::vector<std::uint8_t> cells;
  std::uint8_t bus = 0;
};

MachineState initial_state(const MachineProgram &m, std::span<const std::uint8_t> inputs);

/// Core interpreter. `observe(const Event&)` is called for every register
/// write and bus update; `step(addr, cycle_before)` before every instruction.
template <class OnEvent, class OnStep>
RunResult execute(const Decoded &d, const MachineProfile &p, MachineState &s,
                  OnEvent &&observe, OnStep &&step) {
  std::uint64_t cycles = 0;
  std::size_t pc = 0;
  const std::size_t n = d.code.size();
  const unsigned regs = p.num_registers;
  auto read = [&](std::uint8_t loc, std::uint32_t addr) -> std::uint8_t {
    if (loc & kSlotFlag) {
      unsigned k = loc & 0x7F;
      if (k >= p.mem_slots)
        throw ExecError("spill slot out of range");
      std::uint8_t v = s.slots[k];
      observe(Event{addr, EventKind::BusUpdate, 0, s.bus, v});
      s.bus = v;
      return v;
    }
    if (loc >= regs)
      throw ExecError("register out of range");
    return s.regs[loc];
  };
  auto write = [&](std::uint8_t loc, std::uint8_t v, std::uint32_t addr) {
    if (loc & kSlotFlag) {
      unsigned k = loc & 0x7F;
      if (k >= p.mem_slots)
        throw ExecError("spill slot out of range");
      observe(Event{addr, EventKind::BusUpdate, 0, s.bus, v});
      s.bus = v;
      s.slots[k] = v;
      return;
    }
    if (loc >= regs)
      throw ExecError("register out of range");
    observe(Event{addr, EventKind::RegWrite, loc, s.regs[loc], v});
    s.regs[loc] = v;
  };
  while (true) {
    if (pc >= n)
      throw ExecError("fell off the end of the program");
    const Instr &in = d.code[pc];
    const std::uint32_t addr = static_cast<std::uint32_t>(pc * 4);
    step(addr, cycles);
    cycles += instr_latency(in, p);
    std::size_t next = pc + 1;
    switch (in.op) {
    case MOp::Nop:
      break;
    case MOp::Add:
    case MOp::Sub:
    case MOp::Xor:
    case MOp::And:
    case MOp::Or: {
      std::uint8_t x = read(in.b, addr);
      std::uint8_t y = in.imm ? in.c : read(in.c, addr);
      std::uint8_t r = 0;
      switch (in.op) {
      case MOp::Add: r = static_cast<std::uint8_t>(x + y); break;
      case MOp::Sub: r = static_cast<std::uint8_t>(x - y); break;
      case MOp::Xor: r = x ^ y; break;
      case MOp::And: r = x & y; break;
      default: r = x | y; break;
      }
      write(in.a, r, addr);
      break;
    }
    case MOp::Mov:
      write(in.a, read(in.b, addr), addr);
      break;
    case MOp::Li:
      write(in.a, in.c, addr);
      break;
    case MOp::Ld: {
      if (in.b >= s.cells.size())
        throw ExecError("data cell out of range");
      std::uint8_t v = s.cells[in.b];
      observe(Event{addr, EventKind::BusUpdate, 0, s.bus, v});
      s.bus = v;
      write(in.a, v, addr);
      break;
    }
    case MOp::St: {
      if (in.a >= s.cells.size())
        throw ExecError("data cell out of range");
      std::uint8_t v = read(in.b, addr);
      observe(Event{addr, EventKind::BusUpdate, 0, s.bus, v});
      s.bus = v;
      s.cells[in.a] = v;
      break;
    }
    case MOp::Beq:
    case MOp::Bne: {
      std::uint8_t x = read(in.a, addr);
      std::uint8_t y = in.imm ? in.b : read(in.b, addr);
      bool taken = (in.op == MOp::Beq) == (x == y);
      if (taken) {
        cycles += p.taken_branch_overhead;
        next = in.c;
      }
      break;
    }
    case MOp::B:
      next = static_cast<std::size_t>(in.a) | (static_cast<std::size_t>(in.b) << 8);
      break;
    case MOp::Ret:
      return RunResult{read(in.a, addr), cycles};
    }
    pc = next;
  }
}

RunResult run_fast(const Decoded &d, const MachineProfile &p, std::span<const std::uint8_t> inputs);
ExecTrace run(const MachineProgram &m, std::span<const std::uint8_t> inputs,
              const MachineProfile &p);

struct LeakSite {
  std::uint32_t address = 0;
  EventKind kind = EventKind::RegWrite;
  std::uint8_t index = 0;

  auto operator<=>(const LeakSite &) const = default;
};

std::string to_string(const LeakSite &s);

struct LeakPoint {
  LeakSite site;
  std::uint8_t value = 0; // old xor new
};

std::vector<LeakPoint> hd_leak_points(const ExecTrace &t);

} // namespace secdiv

#endif
