#include "secdiv/machine.hpp"

#include <algorithm>
#include <sstream>

namespace secdiv {

namespace {

MachineProfile make_profile(std::string name, unsigned regs) {
  MachineProfile p;
  p.name = std::move(name);
  p.num_registers = regs;
  p.mem_slots = 4;
  auto set = [&](Opcode op, unsigned v) { p.latency[static_cast<int>(op)] = v; };
  for (Opcode op : {Opcode::Add, Opcode::Sub, Opcode::Xor, Opcode::And, Opcode::Or, Opcode::Mov,
                    Opcode::Copy, Opcode::Li, Opcode::Nop, Opcode::Ret, Opcode::Beq, Opcode::Bne})
    set(op, 1);
  set(Opcode::Ld, 2);
  set(Opcode::St, 2);
  set(Opcode::B, 3);
  return p;
}

constexpr std::string_view kMOpNames[] = {"nop", "add", "sub", "xor", "and", "or",  "mov",
                                          "li",  "ld",  "st",  "beq", "bne", "b",   "ret"};

MOp machine_op(Opcode op) {
  switch (op) {
  case Opcode::Add: return MOp::Add;
  case Opcode::Sub: return MOp::Sub;
  case Opcode::Xor: return MOp::Xor;
  case Opcode::And: return MOp::And;
  case Opcode::Or: return MOp::Or;
  case Opcode::Mov:
  case Opcode::Copy: return MOp::Mov;
  case Opcode::Li: return MOp::Li;
  case Opcode::Ld: return MOp::Ld;
  case Opcode::St: return MOp::St;
  case Opcode::Beq: return MOp::Beq;
  case Opcode::Bne: return MOp::Bne;
  case Opcode::B: return MOp::B;
  case Opcode::Ret: return MOp::Ret;
  case Opcode::Nop: return MOp::Nop;
  }
  return MOp::Nop;
}

void put16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    if (pos_ >= b_.size())
      throw std::runtime_error("truncated program dump");
    return b_[pos_++];
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(u8() | (u8() << 8)); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::string str() {
    std::size_t n = u8();
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
      s.push_back(static_cast<char>(u8()));
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

} // namespace

const MachineProfile &tight8() {
  static const MachineProfile p = make_profile("tight8", 8);
  return p;
}

const MachineProfile &wide32() {
  static const MachineProfile p = make_profile("wide32", 32);
  return p;
}

const MachineProfile &profile_by_name(std::string_view name) {
  if (name == "tight8")
    return tight8();
  if (name == "wide32")
    return wide32();
  throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

std::string_view to_string(MOp op) { return kMOpNames[static_cast<int>(op)]; }

bool is_control(MOp op) {
  return op == MOp::Beq || op == MOp::Bne || op == MOp::B || op == MOp::Ret;
}

std::uint32_t encode_word(const Instr &i) {
  std::uint32_t op = static_cast<std::uint32_t>(i.op) | (i.imm ? kImmFlag : 0);
  return op | (static_cast<std::uint32_t>(i.a) << 8) | (static_cast<std::uint32_t>(i.b) << 16) |
         (static_cast<std::uint32_t>(i.c) << 24);
}

Instr decode_word(std::uint32_t w) {
  Instr i;
  std::uint8_t op = w & 0xFF;
  i.imm = op & kImmFlag;
  op &= 0x7F;
  if (op > static_cast<std::uint8_t>(MOp::Ret))
    throw std::runtime_error("invalid opcode byte " + std::to_string(op));
  i.op = static_cast<MOp>(op);
  i.a = (w >> 8) & 0xFF;
  i.b = (w >> 16) & 0xFF;
  i.c = (w >> 24) & 0xFF;
  bool imm_ok = i.op == MOp::Add || i.op == MOp::Sub || i.op == MOp::Xor || i.op == MOp::And ||
                i.op == MOp::Or || i.op == MOp::Beq || i.op == MOp::Bne;
  if (i.imm && !imm_ok)
    throw std::runtime_error("immediate flag on " + std::string(to_string(i.op)));
  return i;
}

std::size_t MachineProgram::block_size(std::size_t b) const {
  std::size_t end = b + 1 < block_offsets.size() ? block_offsets[b + 1] : words.size();
  return end - block_offsets[b];
}

std::vector<std::uint8_t> dump_program(const MachineProgram &m) {
  std::vector<std::uint8_t> out{'M', 'R', 'S', 'C'};
  auto str = [&](const std::string &s) {
    if (s.size() > 255)
      throw std::runtime_error("name too long for program dump");
    out.push_back(static_cast<std::uint8_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  };
  str(m.profile);
  str(m.function);
  out.push_back(static_cast<std::uint8_t>(m.inputs.size()));
  for (const auto &in : m.inputs) {
    out.push_back(in.in_memory ? 1 : 0);
    out.push_back(in.index);
    out.push_back(static_cast<std::uint8_t>(in.label));
  }
  put16(out, m.data_cells);
  put16(out, static_cast<std::uint16_t>(m.block_offsets.size()));
  for (auto o : m.block_offsets)
    put32(out, o);
  put32(out, static_cast<std::uint32_t>(m.words.size()));
  for (auto w : m.words)
    put32(out, w);
  return out;
}

MachineProgram load_program(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.u8() != 'M' || r.u8() != 'R' || r.u8() != 'S' || r.u8() != 'C')
    throw std::runtime_error("bad magic: not an MRSC program dump");
  MachineProgram m;
  m.profile = r.str();
  m.function = r.str();
  std::size_t nin = r.u8();
  for (std::size_t i = 0; i < nin; ++i) {
    InputBinding b;
    b.in_memory = r.u8() != 0;
    b.index = r.u8();
    std::uint8_t l = r.u8();
    if (l > 2)
      throw std::runtime_error("bad input label in program dump");
    b.label = static_cast<Label>(l);
    m.inputs.push_back(b);
  }
  m.data_cells = r.u16();
  std::size_t nb = r.u16();
  for (std::size_t i = 0; i < nb; ++i)
    m.block_offsets.push_back(r.u32());
  std::size_t nw = r.u32();
  for (std::size_t i = 0; i < nw; ++i) {
    m.words.push_back(r.u32());
    decode_word(m.words.back());
  }
  if (!r.done())
    throw std::runtime_error("trailing bytes in program dump");
  for (std::size_t i = 0; i < nb; ++i)
    if (m.block_offsets[i] > nw || (i && m.block_offsets[i] < m.block_offsets[i - 1]))
      throw std::runtime_error("bad block offset table");
  return m;
}

unsigned instr_latency(const Instr &i, const MachineProfile &p) {
  auto slot = [](std::uint8_t loc) { return (loc & kSlotFlag) ? 1u : 0u; };
  unsigned spilled = 0;
  Opcode base = Opcode::Nop;
  switch (i.op) {
  case MOp::Nop: base = Opcode::Nop; break;
  case MOp::Add: case MOp::Sub: case MOp::Xor: case MOp::And: case MOp::Or:
    base = Opcode::Add;
    spilled = slot(i.a) + slot(i.b) + (i.imm ? 0 : slot(i.c));
    break;
  case MOp::Mov: base = Opcode::Mov; spilled = slot(i.a) + slot(i.b); break;
  case MOp::Li: base = Opcode::Li; spilled = slot(i.a); break;
  case MOp::Ld: base = Opcode::Ld; spilled = slot(i.a); break;
  case MOp::St: base = Opcode::St; spilled = slot(i.b); break;
  case MOp::Beq: case MOp::Bne:
    base = Opcode::Beq;
    spilled = slot(i.a) + (i.imm ? 0 : slot(i.b));
    break;
  case MOp::B: base = Opcode::B; break;
  case MOp::Ret: base = Opcode::Ret; spilled = slot(i.a); break;
  }
  return p.lat(base) + p.spill_access_cost * spilled;
}

MachineProgram encode(const FunctionIR &f, const Assignment &a, const MachineProfile &p) {
  MachineProgram m;
  m.profile = p.name;
  m.function = f.name;
  if (f.cells.size() > 255)
    throw EncodeError("too many data cells");
  m.data_cells = static_cast<std::uint16_t>(f.cells.size());
  for (const auto &in : f.inputs) {
    InputBinding b;
    b.in_memory = in.in_memory;
    b.label = in.label;
    if (in.in_memory) {
      b.index = static_cast<std::uint8_t>(in.index);
    } else {
      if (in.index >= a.loc.size() || a.loc[in.index] < 0)
        throw EncodeError("unmapped input temp '" + f.temps[in.index].name + "'");
      b.index = static_cast<std::uint8_t>(a.loc[in.index]);
    }
    m.inputs.push_back(b);
  }
  auto loc_byte = [&](TempId t) -> std::uint8_t {
    if (t >= a.loc.size() || a.loc[t] < 0)
      throw EncodeError("unmapped temp '" + f.temps[t].name + "'");
    unsigned l = static_cast<unsigned>(a.loc[t]);
    if (l < p.num_registers)
      return static_cast<std::uint8_t>(l);
    if (l < p.locations())
      return static_cast<std::uint8_t>(kSlotFlag | (l - p.num_registers));
    throw EncodeError("temp '" + f.temps[t].name + "' mapped outside the location range");
  };

  struct Pending {
    std::size_t word;
    BlockId target;
    bool wide;
  };
  std::vector<Pending> fixups;
  for (const auto &b : f.blocks) {
    m.block_offsets.push_back(static_cast<std::uint32_t>(m.words.size()));
    std::vector<const Operation *> active;
    for (const auto &op : b.ops) {
      if (op.id >= a.ops.size())
        throw EncodeError("no decision for operation " + std::to_string(op.id));
      if (a.ops[op.id].active)
        active.push_back(&op);
      else if (!op.optional)
        throw EncodeError("mandatory operation " + std::to_string(op.id) + " inactive");
    }
    std::stable_sort(active.begin(), active.end(), [&](const Operation *x, const Operation *y) {
      return a.ops[x->id].cycle < a.ops[y->id].cycle;
    });
    long time = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Operation &op = *active[k];
      const OpChoice &ch = a.ops[op.id];
      if (ch.cycle < time)
        throw EncodeError("cycle collision in block " + std::to_string(b.id) + " at cycle " +
                          std::to_string(ch.cycle));
      if (is_terminator(op.opcode) && k + 1 != active.size())
        throw EncodeError("terminator not scheduled last in block " + std::to_string(b.id));
      while (time < ch.cycle) {
        m.words.push_back(encode_word(Instr{}));
        time += p.lat(Opcode::Nop);
      }
      Instr in;
      in.op = machine_op(op.opcode);
      auto src = [&](const Operand &o) { return o.is_imm ? std::uint8_t(o.value) : loc_byte(o.value); };
      switch (op.opcode) {
      case Opcode::Add: case Opcode::Sub: case Opcode::Xor: case Opcode::And: case Opcode::Or: {
        Operand x = op.uses[0], y = op.uses[1];
        if (ch.swap && op.commutative())
          std::swap(x, y);
        in.a = loc_byte(*op.def);
        in.b = src(x);
        in.c = src(y);
        in.imm = y.is_imm;
        break;
      }
      case Opcode::Mov: case Opcode::Copy:
        in.a = loc_byte(*op.def);
        in.b = loc_byte(op.uses[0].value);
        if (ch.instr == 1 || ch.instr == 2) {
          in.op = ch.instr == 1 ? MOp::Add : MOp::Or;
          in.imm = true;
          in.c = 0;
        }
        break;
      case Opcode::Li:
        in.a = loc_byte(*op.def);
        in.c = static_cast<std::uint8_t>(op.uses[0].value);
        break;
      case Opcode::Ld:
        in.a = loc_byte(*op.def);
        in.b = static_cast<std::uint8_t>(*op.cell);
        break;
      case Opcode::St:
        in.a = static_cast<std::uint8_t>(*op.cell);
        in.b = loc_byte(op.uses[0].value);
        break;
      case Opcode::Beq: case Opcode::Bne: {
        Operand x = op.uses[0], y = op.uses[1];
        if (ch.swap && op.commutative())
          std::swap(x, y);
        in.a = src(x);
        in.b = src(y);
        in.imm = y.is_imm;
        fixups.push_back({m.words.size(), *op.target, false});
        break;
      }
      case Opcode::B:
        fixups.push_back({m.words.size(), *op.target, true});
        break;
      case Opcode::Ret:
        in.a = loc_byte(op.uses[0].value);
        break;
      case Opcode::Nop:
        break;
      }
      m.words.push_back(encode_word(in));
      time = ch.cycle + static_cast<long>(instr_latency(in, p));
    }
  }
  for (const auto &fx : fixups) {
    std::uint32_t target = m.block_offsets.at(fx.target);
    Instr in = decode_word(m.words[fx.word]);
    if (fx.wide) {
      if (target > 0xFFFF)
        throw EncodeError("branch target out of range");
      in.a = target & 0xFF;
      in.b = (target >> 8) & 0xFF;
    } else {
      if (target > 0xFF)
        throw EncodeError("conditional branch target out of range");
      in.c = static_cast<std::uint8_t>(target);
    }
    m.words[fx.word] = encode_word(in);
  }
  return m;
}

Decoded decode_program(const MachineProgram &m) {
  Decoded d;
  d.program = &m;
  d.code.reserve(m.words.size());
  for (auto w : m.words)
    d.code.push_back(decode_word(w));
  d.block_of.assign(m.words.size(), 0);
  for (std::size_t b = 0; b < m.block_offsets.size(); ++b)
    for (std::size_t i = m.block_offsets[b]; i < m.block_offsets[b] + m.block_size(b); ++i)
      d.block_of[i] = static_cast<std::uint32_t>(b);
  return d;
}

unsigned block_cost(const Decoded &d, std::size_t block, const MachineProfile &p) {
  const auto &m = *d.program;
  unsigned c = 0;
  for (std::size_t i = m.block_offsets[block]; i < m.block_offsets[block] + m.block_size(block); ++i)
    c += instr_latency(d.code[i], p);
  return c;
}

MachineState initial_state(const MachineProgram &m, std::span<const std::uint8_t> inputs) {
  if (inputs.size() != m.inputs.size())
    throw ExecError("expected " + std::to_string(m.inputs.size()) + " input values, got " +
                    std::to_string(inputs.size()));
  MachineState s;
  s.cells.assign(m.data_cells, 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto &b = m.inputs[i];
    if (b.in_memory) {
      if (b.index >= s.cells.size())
        throw ExecError("input cell out of range");
      s.cells[b.index] = inputs[i];
    } else {
      if (b.index >= s.regs.size())
        throw ExecError("input register out of range");
      s.regs[b.index] = inputs[i];
    }
  }
  return s;
}

RunResult run_fast(const Decoded &d, const MachineProfile &p, std::span<const std::uint8_t> inputs) {
  MachineState s = initial_state(*d.program, inputs);
  return execute(d, p, s, [](const Event &) {}, [](std::uint32_t, std::uint64_t) {});
}

ExecTrace run(const MachineProgram &m, std::span<const std::uint8_t> inputs,
              const MachineProfile &p) {
  Decoded d = decode_program(m);
  MachineState s = initial_state(m, inputs);
  ExecTrace t;
  auto finish_step = [&] {
    if (!t.steps.empty()) {
      t.steps.back().registers.assign(s.regs.begin(), s.regs.begin() + p.num_registers);
      t.steps.back().bus = s.bus;
    }
  };
  auto r = execute(
      d, p, s, [&](const Event &e) { t.events.push_back(e); },
      [&](std::uint32_t addr, std::uint64_t cycle) {
        finish_step();
        t.steps.push_back(Step{addr, cycle, {}, 0});
        std::uint32_t blk = d.block_of[addr / 4];
        if (t.blocks.empty() || t.blocks.back() != blk)
          t.blocks.push_back(blk);
      });
  finish_step();
  t.cycles = r.cycles;
  t.result = r.result;
  return t;
}

std::string to_string(const LeakSite &s) {
  std::ostringstream os;
  os << "0x" << std::hex << s.address << std::dec << ":";
  if (s.kind == EventKind::RegWrite)
    os << "r" << unsigned(s.index);
  else
    os << "bus";
  return os.str();
}

std::vector<LeakPoint> hd_leak_points(const ExecTrace &t) {
  std::vector<LeakPoint> out;
  out.reserve(t.events.size());
  for (const auto &e : t.events)
    out.push_back({{e.address, e.kind, e.index},
                   static_cast<std::uint8_t>(e.old_value ^ e.new_value)});
  return out;
}

} // namespace secdiv
