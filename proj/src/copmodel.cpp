#include "secdiv/copmodel.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace secdiv {

std::string_view to_string(SecMode m) {
  switch (m) {
  case SecMode::None:
    return "none";
  case SecMode::Tsc:
    return "tsc";
  case SecMode::Psc:
    return "psc";
  }
  return "?";
}

std::size_t CopProblem::op_index(std::uint32_t id) const {
  for (std::size_t i = 0; i < ops.size(); ++i)
    if (ops[i].id == id)
      return i;
  throw std::out_of_range("no model operation with id " + std::to_string(id));
}

std::vector<int> CopProblem::decision_vars() const {
  std::vector<int> out;
  for (std::size_t v = 0; v < vars.size(); ++v)
    if (vars[v].kind != VarKind::Spilled && vars[v].kind != VarKind::Cost)
      out.push_back(static_cast<int>(v));
  return out;
}

namespace {

unsigned base_path_cost(const FunctionIR &f, const MachineProfile &p,
                        const std::vector<BlockId> &path) {
  unsigned c = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    for (const auto &op : f.blocks[path[i]].ops)
      if (!op.optional)
        c += p.lat(op.opcode);
    const Operation *t = f.blocks[path[i]].terminator();
    if (t && is_conditional_branch(t->opcode) && i + 1 < path.size() && *t->target == path[i + 1])
      c += p.taken_branch_overhead;
  }
  return c;
}

unsigned taken_edges(const FunctionIR &f, const std::vector<BlockId> &path) {
  unsigned n = 0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Operation *t = f.blocks[path[i]].terminator();
    if (t && is_conditional_branch(t->opcode) && *t->target == path[i + 1])
      ++n;
  }
  return n;
}

std::string var_name(const CopProblem &prob, int v) {
  const Var &x = prob.vars[v];
  switch (x.kind) {
  case VarKind::Active: return "active.o" + std::to_string(prob.ops[x.subject].id);
  case VarKind::Cycle: return "cycle.o" + std::to_string(prob.ops[x.subject].id);
  case VarKind::Instr: return "instr.o" + std::to_string(prob.ops[x.subject].id);
  case VarKind::Swap: return "swap.o" + std::to_string(prob.ops[x.subject].id);
  case VarKind::Loc: return "loc." + prob.function.temps[x.subject].name;
  case VarKind::Spilled: return "spilled." + prob.function.temps[x.subject].name;
  case VarKind::Cost: return "cost.b" + std::to_string(x.subject);
  }
  return "?";
}

void add_constraints(CopProblem &prob) {
  auto &cs = prob.constraints;
  const auto &f = prob.function;
  auto op_name = [&](std::size_t i) { return "o" + std::to_string(prob.ops[i].id); };
  for (std::size_t i = 0; i < prob.ops.size(); ++i) {
    const auto &op = prob.ops[i];
    for (auto p : op.preds)
      cs.push_back({"dependency", "(precedes " + op_name(p) + " " + op_name(i) + ")"});
    if (!op.optional)
      cs.push_back({"mandatory", "(= active." + op_name(i) + " 1)"});
    if (op.optional && op.alias && op.def)
      cs.push_back({"copy-semantics", "(=> (not active." + op_name(i) + ") (= loc." +
                                          f.temps[*op.def].name + " loc." +
                                          f.temps[*op.alias].name + "))"});
  }
  for (const auto &b : prob.blocks) {
    std::string s = "(dense-single-issue b" + std::to_string(b.id);
    for (auto i : b.ops)
      s += " " + op_name(i);
    cs.push_back({"single-issue", s + ")"});
    std::string c = "(= cost.b" + std::to_string(b.id) + " (+";
    for (auto i : b.ops)
      c += " (* active." + op_name(i) + " lat." + op_name(i) + ")";
    cs.push_back({"block-cost", c + "))"});
    for (std::size_t k = 1; k < b.nops.size(); ++k)
      cs.push_back({"symmetry", "(nop-order " + op_name(b.nops[k - 1]) + " " + op_name(b.nops[k]) +
                                    ")"});
  }
  for (const auto &t : prob.temps) {
    if (t.pinned >= 0)
      cs.push_back({"calling-convention",
                    "(= loc." + f.temps[t.id].name + " " + std::to_string(t.pinned) + ")"});
    cs.push_back({"spill-link", "(= spilled." + f.temps[t.id].name + " (>= loc." +
                                    f.temps[t.id].name + " " +
                                    std::to_string(prob.profile.num_registers) + "))"});
  }
  cs.push_back({"interference", "(distinct-when-live-ranges-overlap all-temps)"});
  for (std::size_t s = 0; s < prob.balance_sets.size(); ++s) {
    std::string c = "(balance";
    for (const auto &p : prob.balance_sets[s]) {
      c += " (+";
      for (auto b : p.blocks)
        c += " cost.b" + std::to_string(b);
      c += " " + std::to_string(p.taken_edges * prob.profile.taken_branch_overhead) + ")";
    }
    cs.push_back({"balance", c + ")"});
  }
  if (prob.mode == SecMode::Psc) {
    auto tname = [&](std::uint32_t t) {
      return t == kInitialContent ? std::string("<initial>") : f.temps[t].name;
    };
    auto mname = [&](std::uint32_t o) {
      return o == kInitialContent ? std::string("<initial>") : "o" + std::to_string(o);
    };
    for (const auto &[a, b] : prob.pairs.rpairs)
      cs.push_back({"rot-conflict", "(not-subsequent " + tname(a) + " " + tname(b) + ")"});
    for (const auto &[a, b] : prob.pairs.mpairs)
      cs.push_back({"mre-conflict", "(not-adjacent " + mname(a) + " " + mname(b) + ")"});
  }
  if (prob.bound) {
    std::string c = "(<= (+";
    for (const auto &b : prob.blocks)
      c += " (* " + std::to_string(b.weight) + " cost.b" + std::to_string(b.id) + ")";
    cs.push_back({"optimality-gap", c + ") " + std::to_string(*prob.bound) + ")"});
  }
}

std::int64_t scaled_bound(const CopProblem &prob, Rational gap, Rational best) {
  Rational scaled = best * prob.weight_scale;
  Rational limit = (Rational(1) + gap) * scaled;
  // floor for nonnegative rationals
  return limit.numerator() / limit.denominator();
}

} // namespace

CopProblem build_problem(const FunctionIR &src, const LeakPairSets &pairs,
                         const std::vector<SecretPathSet> &psets, const MachineProfile &p,
                         SecMode mode, Rational gap, std::optional<Rational> best_cost,
                         const BuildOptions &opts) {
  if (gap < 0)
    throw ModelError("optimality gap must be nonnegative");
  CopProblem prob;
  prob.profile = p;
  prob.mode = mode;
  prob.gap = gap;
  prob.allow_spill = mode != SecMode::Psc;
  prob.pairs = mode == SecMode::Psc ? pairs : LeakPairSets{};

  // optional NOP budget per block
  FunctionIR f = src;
  std::vector<unsigned> budget(f.blocks.size(), opts.nop_budget);
  if (mode == SecMode::Tsc) {
    for (const auto &s : psets) {
      unsigned lo = std::numeric_limits<unsigned>::max(), hi = 0;
      for (const auto &path : s.paths) {
        unsigned c = base_path_cost(f, p, path);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      unsigned need = opts.secret_nop_budget ? opts.secret_nop_budget : hi - lo + 2;
      for (const auto &path : s.paths)
        for (std::size_t i = 1; i + 1 < path.size(); ++i)
          budget[path[i]] = std::max(budget[path[i]], need);
    }
  }
  std::uint32_t next_id = f.next_op_id();
  for (auto &b : f.blocks) {
    unsigned ir_nops = 0, others = 0;
    for (const auto &op : b.ops)
      (op.opcode == Opcode::Nop && op.optional ? ir_nops : others) += 1;
    unsigned synthetic = opts.nop_per_op ? others : (budget[b.id] > ir_nops ? budget[b.id] - ir_nops : 0);
    auto pos = b.terminator() ? b.ops.end() - 1 : b.ops.end();
    std::vector<Operation> extra;
    for (unsigned k = 0; k < synthetic; ++k) {
      Operation nop;
      nop.id = next_id++;
      nop.opcode = Opcode::Nop;
      nop.optional = true;
      extra.push_back(nop);
    }
    b.ops.insert(pos, extra.begin(), extra.end());
  }
  validate(f);
  prob.function = f;

  // weights
  std::int64_t scale = 1;
  for (const auto &b : f.blocks)
    scale = std::lcm(scale, b.weight.denominator());
  prob.weight_scale = scale;

  auto dom = dominators(f);
  std::map<std::uint32_t, std::size_t> index_of;
  std::map<std::uint32_t, std::pair<BlockId, std::size_t>> position;
  for (const auto &b : f.blocks) {
    ModelBlock mb;
    mb.id = b.id;
    Rational w = b.weight * scale;
    mb.weight = w.numerator() / w.denominator();
    for (std::size_t k = 0; k < b.ops.size(); ++k) {
      const auto &op = b.ops[k];
      ModelOp m;
      m.id = op.id;
      m.block = b.id;
      m.opcode = op.opcode;
      m.optional = op.optional;
      m.terminator = is_terminator(op.opcode);
      for (const auto &u : op.uses)
        if (!u.is_imm)
          m.uses.push_back(u.value);
      m.def = op.def;
      m.cell = op.cell;
      m.base_latency = p.lat(op.opcode);
      if (op.opcode == Opcode::Mov || op.opcode == Opcode::Copy)
        m.instr_alts = 3;
      m.swappable = op.commutative() && op.uses[0].value != op.uses[1].value;
      if (op.optional && op.opcode == Opcode::Copy)
        m.alias = op.uses[0].value;
      if (op.optional && op.opcode == Opcode::Li) {
        for (const auto &ob : f.blocks) {
          for (std::size_t j = 0; j < ob.ops.size() && !m.alias; ++j) {
            const auto &c = ob.ops[j];
            if (c.opcode == Opcode::Li && !c.optional && c.uses[0] == op.uses[0] &&
                (ob.id == b.id ? j < k : dom[b.id][ob.id]))
              m.alias = *c.def;
          }
        }
      }
      if (op.opcode == Opcode::Nop && op.optional)
        m.nop_rank = static_cast<int>(mb.nops.size());
      index_of[op.id] = prob.ops.size();
      position[op.id] = {b.id, k};
      mb.ops.push_back(prob.ops.size());
      if (m.nop_rank >= 0)
        mb.nops.push_back(prob.ops.size());
      prob.ops.push_back(std::move(m));
    }
    prob.blocks.push_back(std::move(mb));
  }

  // temps
  auto reg_inputs = f.register_inputs();
  if (reg_inputs.size() > p.num_registers)
    throw ModelError("interference: " + std::to_string(reg_inputs.size()) +
                     " register inputs exceed " + std::to_string(p.num_registers) + " registers");
  for (std::size_t t = 0; t < f.temps.size(); ++t) {
    ModelTemp mt;
    mt.id = static_cast<TempId>(t);
    auto it = std::find(reg_inputs.begin(), reg_inputs.end(), t);
    if (it != reg_inputs.end()) {
      mt.input = true;
      mt.pinned = static_cast<int>(it - reg_inputs.begin());
    } else {
      mt.def_op = index_of.at(f.temps[t].def_site);
    }
    prob.temps.push_back(mt);
  }

  // in-block precedences
  auto def_chain = [&](TempId t, BlockId b, std::set<std::size_t> &out) {
    while (true) {
      const auto &mt = prob.temps[t];
      if (!mt.def_op)
        return;
      const ModelOp &d = prob.ops[*mt.def_op];
      if (d.block == b)
        out.insert(*mt.def_op);
      if (!d.optional || !d.alias)
        return;
      t = *d.alias;
    }
  };
  for (auto &mb : prob.blocks) {
    for (std::size_t k = 0; k < mb.ops.size(); ++k) {
      std::size_t i = mb.ops[k];
      std::set<std::size_t> preds;
      auto &op = prob.ops[i];
      for (auto u : op.uses)
        def_chain(u, mb.id, preds);
      if (op.alias)
        def_chain(*op.alias, mb.id, preds);
      for (std::size_t j = 0; j < k; ++j) {
        const auto &e = prob.ops[mb.ops[j]];
        if (op.terminator)
          preds.insert(mb.ops[j]);
        if (op.cell && e.cell && *op.cell == *e.cell &&
            (op.opcode == Opcode::St || e.opcode == Opcode::St))
          preds.insert(mb.ops[j]);
      }
      preds.erase(i);
      op.preds.assign(preds.begin(), preds.end());
    }
    int horizon = 0;
    for (auto i : mb.ops) {
      const auto &op = prob.ops[i];
      unsigned operands = static_cast<unsigned>(op.uses.size()) + (op.def ? 1 : 0);
      horizon += static_cast<int>(op.base_latency + p.spill_access_cost * operands);
    }
    mb.horizon = horizon;
  }

  auto g = build_cfg(f);
  prob.cfg_paths = all_paths(g);
  if (mode == SecMode::Tsc) {
    for (const auto &s : psets) {
      std::vector<BalancedPath> set;
      for (const auto &path : s.paths)
        set.push_back({path, taken_edges(f, path)});
      prob.balance_sets.push_back(std::move(set));
    }
  }

  // variables
  auto add = [&](VarKind k, std::uint32_t subject, int lo, int hi) {
    prob.vars.push_back({k, subject, lo, hi});
    return static_cast<int>(prob.vars.size() - 1);
  };
  for (std::size_t i = 0; i < prob.ops.size(); ++i) {
    const auto &op = prob.ops[i];
    prob.active_var.push_back(add(VarKind::Active, static_cast<std::uint32_t>(i), op.optional ? 0 : 1, 1));
    prob.cycle_var.push_back(add(VarKind::Cycle, static_cast<std::uint32_t>(i), 0,
                                 prob.blocks[op.block].horizon));
    prob.instr_var.push_back(add(VarKind::Instr, static_cast<std::uint32_t>(i), 0, op.instr_alts - 1));
    prob.swap_var.push_back(add(VarKind::Swap, static_cast<std::uint32_t>(i), 0, op.swappable ? 1 : 0));
  }
  int max_loc = static_cast<int>(prob.allow_spill ? p.locations() : p.num_registers) - 1;
  for (const auto &t : prob.temps) {
    if (t.pinned >= 0) {
      prob.loc_var.push_back(add(VarKind::Loc, t.id, t.pinned, t.pinned));
      prob.spilled_var.push_back(add(VarKind::Spilled, t.id, 0, 0));
    } else {
      prob.loc_var.push_back(add(VarKind::Loc, t.id, 0, max_loc));
      prob.spilled_var.push_back(add(VarKind::Spilled, t.id, 0, prob.allow_spill ? 1 : 0));
    }
  }
  for (const auto &b : prob.blocks)
    prob.cost_var.push_back(add(VarKind::Cost, b.id, 0, b.horizon));

  if (best_cost)
    prob.bound = scaled_bound(prob, gap, *best_cost);
  prob.best_cost = best_cost;
  add_constraints(prob);
  return prob;
}

CopProblem with_bound(const CopProblem &prob, Rational gap, std::optional<Rational> best_cost) {
  if (gap < 0)
    throw ModelError("optimality gap must be nonnegative");
  CopProblem out = prob;
  out.gap = gap;
  out.best_cost = best_cost;
  out.bound.reset();
  if (best_cost)
    out.bound = scaled_bound(out, gap, *best_cost);
  out.constraints.clear();
  add_constraints(out);
  return out;
}

// ---------------------------------------------------------------------------
// Independent evaluation of a full assignment

namespace {

constexpr int kForever = std::numeric_limits<int>::max();

struct Evaluation {
  const CopProblem &prob;
  const std::vector<int> &v;
  std::vector<std::string> errors;

  Evaluation(const CopProblem &p, const std::vector<int> &values) : prob(p), v(values) {}

  bool active(std::size_t i) const { return v[prob.active_var[i]] != 0; }
  int cycle(std::size_t i) const { return v[prob.cycle_var[i]]; }
  int loc(TempId t) const { return v[prob.loc_var[t]]; }
  bool in_slot(TempId t) const { return loc(t) >= static_cast<int>(prob.profile.num_registers); }

  unsigned latency(std::size_t i) const {
    const ModelOp &op = prob.ops[i];
    unsigned slots = 0;
    for (auto u : op.uses)
      slots += in_slot(u) ? 1 : 0;
    if (op.def)
      slots += in_slot(*op.def) ? 1 : 0;
    return op.base_latency + prob.profile.spill_access_cost * slots;
  }

  std::int64_t block_cost(const ModelBlock &b) const {
    std::int64_t c = 0;
    for (auto i : b.ops)
      if (active(i))
        c += latency(i);
    return c;
  }

  std::int64_t scaled_objective() const {
    std::int64_t o = 0;
    for (const auto &b : prob.blocks)
      o += b.weight * block_cost(b);
    return o;
  }

  std::vector<std::size_t> block_order(const ModelBlock &b) const {
    std::vector<std::size_t> out;
    for (auto i : b.ops)
      if (active(i))
        out.push_back(i);
    std::sort(out.begin(), out.end(), [&](std::size_t x, std::size_t y) {
      return std::make_pair(cycle(x), x) < std::make_pair(cycle(y), y);
    });
    return out;
  }

  std::string temp_name(std::uint32_t t) const {
    return t == kInitialContent ? std::string("<initial>") : prob.function.temps[t].name;
  }

  TempId value_class(TempId t) const {
    for (int guard = 0; guard < 1000; ++guard) {
      const auto &mt = prob.temps[t];
      if (!mt.def_op)
        return t;
      const ModelOp &d = prob.ops[*mt.def_op];
      if (active(*mt.def_op) || !d.alias)
        return t;
      t = *d.alias;
    }
    return t;
  }

  void check_domains() {
    for (std::size_t k = 0; k < prob.vars.size(); ++k)
      if (v[k] < prob.vars[k].lo || v[k] > prob.vars[k].hi)
        errors.push_back("domain: " + var_name(prob, static_cast<int>(k)) + " = " +
                         std::to_string(v[k]) + " outside [" + std::to_string(prob.vars[k].lo) +
                         ", " + std::to_string(prob.vars[k].hi) + "]");
  }

  void check_ops() {
    for (std::size_t i = 0; i < prob.ops.size(); ++i) {
      const auto &op = prob.ops[i];
      std::string name = "o" + std::to_string(op.id);
      if (!op.optional && !active(i))
        errors.push_back("mandatory: " + name + " inactive");
      if (!active(i) && (cycle(i) != 0 || v[prob.instr_var[i]] != 0 || v[prob.swap_var[i]] != 0))
        errors.push_back("canonical: inactive " + name + " has nonzero cycle/instr/swap");
      if (op.optional && op.alias && op.def && !active(i) && loc(*op.def) != loc(*op.alias))
        errors.push_back("copy-semantics: inactive " + name + " but loc(" + temp_name(*op.def) +
                         ") != loc(" + temp_name(*op.alias) + ")");
    }
    for (const auto &t : prob.temps) {
      bool spilled = v[prob.spilled_var[t.id]] != 0;
      if (spilled != in_slot(t.id))
        errors.push_back("spill-link: " + temp_name(t.id));
      if (t.pinned >= 0 && loc(t.id) != t.pinned)
        errors.push_back("calling-convention: input " + temp_name(t.id) + " not in r" +
                         std::to_string(t.pinned));
      if (!prob.allow_spill && in_slot(t.id))
        errors.push_back("spill-link: " + temp_name(t.id) + " spilled in a no-spill model");
    }
  }

  void check_schedule() {
    for (const auto &b : prob.blocks) {
      auto order = block_order(b);
      int time = 0;
      for (std::size_t k = 0; k < order.size(); ++k) {
        std::size_t i = order[k];
        const auto &op = prob.ops[i];
        if (cycle(i) != time)
          errors.push_back("single-issue: o" + std::to_string(op.id) + " in block " +
                           std::to_string(b.id) + " issues at cycle " + std::to_string(cycle(i)) +
                           ", expected " + std::to_string(time));
        time = cycle(i) + static_cast<int>(latency(i));
        if (op.terminator && k + 1 != order.size())
          errors.push_back("dependency: terminator o" + std::to_string(op.id) + " not last");
      }
      for (auto i : b.ops) {
        if (!active(i))
          continue;
        for (auto p : prob.ops[i].preds)
          if (active(p) && cycle(p) + static_cast<int>(latency(p)) > cycle(i))
            errors.push_back("dependency: o" + std::to_string(prob.ops[p].id) + " -> o" +
                             std::to_string(prob.ops[i].id) + " violated");
      }
      if (v[prob.cost_var[b.id]] != block_cost(b))
        errors.push_back("block-cost: cost.b" + std::to_string(b.id) + " = " +
                         std::to_string(v[prob.cost_var[b.id]]) + ", recomputed " +
                         std::to_string(block_cost(b)));
      for (std::size_t k = 1; k < b.nops.size(); ++k) {
        std::size_t a = b.nops[k - 1], c = b.nops[k];
        if (active(c) && !active(a))
          errors.push_back("symmetry: o" + std::to_string(prob.ops[c].id) + " active before o" +
                           std::to_string(prob.ops[a].id));
        if (active(c) && active(a) && cycle(a) >= cycle(c))
          errors.push_back("symmetry: nop order o" + std::to_string(prob.ops[a].id) + " o" +
                           std::to_string(prob.ops[c].id));
      }
    }
  }

  struct Interval {
    TempId value;
    int start;
    int end;
  };

  /// Live intervals per block over value classes.
  std::vector<std::vector<Interval>> intervals() const {
    const std::size_t nb = prob.blocks.size();
    const std::size_t nt = prob.temps.size();
    std::vector<std::vector<bool>> uses(nb, std::vector<bool>(nt, false));
    std::vector<std::vector<bool>> defs(nb, std::vector<bool>(nt, false));
    std::vector<std::vector<int>> last_use(nb, std::vector<int>(nt, -2));
    std::vector<std::vector<int>> def_cycle(nb, std::vector<int>(nt, -2));
    for (const auto &b : prob.blocks)
      for (auto i : b.ops) {
        if (!active(i))
          continue;
        for (auto u : prob.ops[i].uses) {
          TempId c = value_class(u);
          uses[b.id][c] = true;
          last_use[b.id][c] = std::max(last_use[b.id][c], cycle(i));
        }
        if (prob.ops[i].def) {
          TempId c = value_class(*prob.ops[i].def);
          defs[b.id][c] = true;
          def_cycle[b.id][c] = cycle(i);
        }
      }
    std::vector<std::vector<bool>> live_in(nb, std::vector<bool>(nt, false)),
        live_out(nb, std::vector<bool>(nt, false));
    for (std::size_t bi = nb; bi-- > 0;) {
      for (auto s : prob.function.blocks[bi].successors)
        for (std::size_t t = 0; t < nt; ++t)
          if (live_in[s][t])
            live_out[bi][t] = true;
      for (std::size_t t = 0; t < nt; ++t)
        live_in[bi][t] = (live_out[bi][t] || uses[bi][t]) && !defs[bi][t];
    }
    std::vector<std::vector<Interval>> out(nb);
    for (std::size_t bi = 0; bi < nb; ++bi)
      for (std::size_t t = 0; t < nt; ++t) {
        int start;
        if (defs[bi][t])
          start = def_cycle[bi][t];
        else if (live_in[bi][t])
          start = -1;
        else
          continue;
        int end = live_out[bi][t] ? kForever
                  : uses[bi][t]   ? last_use[bi][t]
                                  : start + 1;
        out[bi].push_back({static_cast<TempId>(t), start, end});
      }
    return out;
  }

  void check_interference() {
    auto ivs = intervals();
    std::set<std::pair<TempId, TempId>> reported;
    for (std::size_t b = 0; b < ivs.size(); ++b)
      for (std::size_t x = 0; x < ivs[b].size(); ++x)
        for (std::size_t y = x + 1; y < ivs[b].size(); ++y) {
          const auto &p = ivs[b][x], &q = ivs[b][y];
          if (p.start < q.end && q.start < p.end && loc(p.value) == loc(q.value) &&
              reported.insert({p.value, q.value}).second)
            errors.push_back("interference: " + temp_name(p.value) + " and " +
                             temp_name(q.value) + " overlap in block " + std::to_string(b) +
                             " but share location " + std::to_string(loc(p.value)));
        }
    // non-input values must be defined before the entry
    for (const auto &iv : ivs[0])
      if (iv.start == -1 && !prob.temps[iv.value].input)
        errors.push_back("interference: " + temp_name(iv.value) + " live into the entry block");
  }

  void check_balance() {
    for (std::size_t s = 0; s < prob.balance_sets.size(); ++s) {
      std::optional<std::int64_t> first;
      for (const auto &p : prob.balance_sets[s]) {
        std::int64_t c = p.taken_edges * prob.profile.taken_branch_overhead;
        for (auto b : p.blocks)
          c += block_cost(prob.blocks[b]);
        if (!first)
          first = c;
        else if (c != *first)
          errors.push_back("balance: secret path set " + std::to_string(s) + " has path costs " +
                           std::to_string(*first) + " and " + std::to_string(c));
      }
    }
  }

  void check_leaks() {
    if (prob.mode != SecMode::Psc)
      return;
    const unsigned regs = prob.profile.num_registers;
    std::set<std::string> seen;
    for (const auto &path : prob.cfg_paths) {
      std::vector<std::uint32_t> last(regs, kInitialContent);
      for (const auto &t : prob.temps)
        if (t.pinned >= 0)
          last[t.pinned] = t.id;
      std::uint32_t bus = kInitialContent;
      for (auto b : path) {
        for (auto i : block_order(prob.blocks[b])) {
          const auto &op = prob.ops[i];
          if (op.opcode == Opcode::Ld || op.opcode == Opcode::St) {
            if (prob.pairs.has_mpair(bus, op.id)) {
              std::string msg = "mre-conflict: memory accesses " +
                                (bus == kInitialContent ? std::string("<initial>")
                                                        : "o" + std::to_string(bus)) +
                                " and o" + std::to_string(op.id) + " adjacent";
              if (seen.insert(msg).second)
                errors.push_back(msg);
            }
            bus = op.id;
          }
          if (op.def) {
            int r = loc(*op.def);
            if (r < 0 || r >= static_cast<int>(regs))
              continue;
            if (prob.pairs.has_rpair(last[r], *op.def)) {
              std::string msg = "rot-conflict: " + temp_name(*op.def) + " overwrites " +
                                temp_name(last[r]) + " in r" + std::to_string(r);
              if (seen.insert(msg).second)
                errors.push_back(msg);
            }
            last[r] = *op.def;
          }
        }
      }
    }
  }
};

} // namespace

Rational objective_value(const Solution &s, const CopProblem &prob) {
  if (s.values.size() != prob.vars.size())
    throw ModelError("partial assignment: " + std::to_string(s.values.size()) + " of " +
                     std::to_string(prob.vars.size()) + " variables");
  Evaluation e(prob, s.values);
  return Rational(e.scaled_objective(), prob.weight_scale);
}

std::vector<std::string> check_solution(const Solution &s, const CopProblem &prob) {
  if (s.values.size() != prob.vars.size())
    return {"assignment: expected " + std::to_string(prob.vars.size()) + " values, got " +
            std::to_string(s.values.size())};
  Evaluation e(prob, s.values);
  e.check_domains();
  if (!e.errors.empty())
    return e.errors;
  e.check_ops();
  e.check_schedule();
  e.check_interference();
  e.check_balance();
  e.check_leaks();
  std::int64_t obj = e.scaled_objective();
  if (prob.bound && obj > *prob.bound)
    e.errors.push_back("optimality-gap: objective " + std::to_string(obj) + " exceeds bound " +
                       std::to_string(*prob.bound));
  if (s.scaled_objective != obj || s.objective != Rational(obj, prob.weight_scale))
    e.errors.push_back("objective: recorded " + format_rational(s.objective) + ", recomputed " +
                       format_rational(Rational(obj, prob.weight_scale)));
  return e.errors;
}

Assignment to_assignment(const Solution &s, const CopProblem &prob) {
  Assignment a;
  a.ops.assign(prob.function.next_op_id(), OpChoice{});
  for (std::size_t i = 0; i < prob.ops.size(); ++i) {
    OpChoice &c = a.ops[prob.ops[i].id];
    c.active = s.values[prob.active_var[i]] != 0;
    c.cycle = s.values[prob.cycle_var[i]];
    c.instr = s.values[prob.instr_var[i]];
    c.swap = s.values[prob.swap_var[i]] != 0;
  }
  a.loc.resize(prob.temps.size());
  for (std::size_t t = 0; t < prob.temps.size(); ++t)
    a.loc[t] = s.values[prob.loc_var[t]];
  return a;
}

MachineProgram encode_solution(const Solution &s, const CopProblem &prob) {
  return encode(prob.function, to_assignment(s, prob), prob.profile);
}

std::string emit_model(const CopProblem &prob) {
  std::ostringstream os;
  os << "(problem\n";
  os << "  (function " << prob.function.name << ")\n";
  os << "  (profile " << prob.profile.name << " (registers " << prob.profile.num_registers
     << ") (slots " << prob.profile.mem_slots << "))\n";
  os << "  (mode " << to_string(prob.mode) << ")\n";
  os << "  (gap " << format_rational(prob.gap) << ")\n";
  if (prob.bound)
    os << "  (bound " << *prob.bound << ")\n";
  os << "  (weight-scale " << prob.weight_scale << ")\n";
  os << "  (vars\n";
  for (std::size_t v = 0; v < prob.vars.size(); ++v)
    os << "    (" << var_name(prob, static_cast<int>(v)) << " " << prob.vars[v].lo << " "
       << prob.vars[v].hi << ")\n";
  os << "  )\n  (constraints\n";
  for (const auto &c : prob.constraints)
    os << "    (" << c.family << " " << c.text << ")\n";
  os << "  )\n  (objective (minimize (+";
  for (const auto &b : prob.blocks)
    os << " (* " << b.weight << " cost.b" << b.id << ")";
  os << "))))\n";
  return os.str();
}

Prepared prepare(const FunctionIR &f, SecMode mode, Balancing balancing) {
  Prepared out{f, infer_types(f), {}, {}, {}};
  if (mode == SecMode::Tsc) {
    std::set<BlockId> done; // branches already given a balancing block
    for (int round = 0; round < 64; ++round) {
      auto psets = extract_secret_path_sets(out.function, out.env);
      bool changed = false;
      for (const auto &s : psets) {
        if (done.count(s.branch_block))
          continue;
        TransformResult r;
        try {
          r = balancing == Balancing::Ebb ? balance_ebb(out.function, s)
                                          : balance_cbb(out.function, s);
        } catch (const TransformError &e) {
          std::string note = std::string("balancing skipped: ") + e.what();
          if (std::find(out.notes.begin(), out.notes.end(), note) == out.notes.end())
            out.notes.push_back(note);
          continue;
        }
        if (!r.changed)
          continue;
        out.notes.push_back(std::string(balancing == Balancing::Ebb ? "ebb" : "cbb") +
                            ": balanced secret branch in block " +
                            std::to_string(s.branch_block));
        std::set<BlockId> shifted;
        for (auto b : done)
          shifted.insert(b > s.branch_block ? b + 1 : b);
        shifted.insert(s.branch_block);
        done = std::move(shifted);
        out.function = std::move(r.function);
        out.env = infer_types(out.function);
        changed = true;
        break;
      }
      if (!changed)
        break;
    }
    out.psets = extract_secret_path_sets(out.function, out.env);
  } else if (mode == SecMode::Psc) {
    auto r = restore_mask_order(f);
    if (r.rewrites)
      out.notes.push_back("mask order: " + std::to_string(r.rewrites) + " reassociation(s)");
    for (auto t : r.residual)
      out.notes.push_back("mask order: residual secret intermediate " +
                          r.function.temps[t].name);
    out.function = std::move(r.function);
    out.env = infer_types(out.function);
    out.pairs = gen_leak_pairs(out.function, out.env);
  }
  return out;
}

SecMode auto_mode(const FunctionIR &f) {
  auto env = infer_types(f);
  if (!extract_secret_path_sets(f, env).empty())
    return SecMode::Tsc;
  for (const auto &in : f.inputs)
    if (in.label == Label::Random)
      return SecMode::Psc;
  return SecMode::None;
}

} // namespace secdiv
