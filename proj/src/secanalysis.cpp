#include "secdiv/secanalysis.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <tuple>

namespace secdiv {

XorForm xor_forms(const XorForm &a, const XorForm &b) {
  XorForm r;
  std::set_symmetric_difference(a.atoms.begin(), a.atoms.end(), b.atoms.begin(), b.atoms.end(),
                                std::inserter(r.atoms, r.atoms.end()));
  r.constant = a.constant ^ b.constant;
  return r;
}

InferredType TypeEnv::type_of(const XorForm &f) const {
  InferredType t;
  for (auto id : f.atoms) {
    const Atom &a = atoms[id];
    t.secret_support.insert(a.secret_support.begin(), a.secret_support.end());
    t.random_support.insert(a.random_support.begin(), a.random_support.end());
  }
  for (auto id : f.atoms) {
    for (const auto &r : atoms[id].dominant) {
      bool alone = std::none_of(f.atoms.begin(), f.atoms.end(), [&](std::uint32_t other) {
        return other != id && atoms[other].random_support.count(r);
      });
      if (alone)
        t.dominant_randoms.insert(r);
    }
  }
  if (!t.dominant_randoms.empty())
    t.label = Label::Random;
  else if (!t.secret_support.empty())
    t.label = Label::Secret;
  else
    t.label = Label::Public;
  return t;
}

namespace {

template <class S> S set_union(const S &a, const S &b) {
  S r = a;
  r.insert(b.begin(), b.end());
  return r;
}

template <class S> S set_minus(const S &a, const S &b) {
  S r;
  for (const auto &x : a)
    if (!b.count(x))
      r.insert(x);
  return r;
}

/// Type of a non-linear two-operand result. Arithmetic keeps a random that
/// masks one operand and is absent from the other; AND/OR never do.
Atom combine(const TypeEnv &env, const XorForm &a, const XorForm &b, bool keeps_mask) {
  InferredType ta = env.type_of(a), tb = env.type_of(b);
  Atom r;
  r.secret_support = set_union(ta.secret_support, tb.secret_support);
  r.random_support = set_union(ta.random_support, tb.random_support);
  if (keeps_mask)
    r.dominant = set_union(set_minus(ta.dominant_randoms, tb.random_support),
                           set_minus(tb.dominant_randoms, ta.random_support));
  return r;
}

InferredType atom_type(const Atom &a) {
  InferredType t;
  t.secret_support = a.secret_support;
  t.random_support = a.random_support;
  t.dominant_randoms = a.dominant;
  t.label = !a.dominant.empty() ? Label::Random
            : !a.secret_support.empty() ? Label::Secret
                                        : Label::Public;
  return t;
}

std::uint8_t fold(Opcode op, std::uint8_t x, std::uint8_t y) {
  switch (op) {
  case Opcode::Add: return static_cast<std::uint8_t>(x + y);
  case Opcode::Sub: return static_cast<std::uint8_t>(x - y);
  case Opcode::And: return x & y;
  default: return x | y;
  }
}

} // namespace

TypeEnv infer_types(const FunctionIR &f) {
  TypeEnv env;
  env.temp_forms.assign(f.temps.size(), XorForm{});
  std::map<std::tuple<int, std::uint32_t, XorForm, XorForm>, std::uint32_t> interned;
  auto intern = [&](int kind, std::uint32_t extra, const XorForm &a, const XorForm &b, Atom atom) {
    auto key = std::make_tuple(kind, extra, a, b);
    if (auto it = interned.find(key); it != interned.end())
      return it->second;
    env.atoms.push_back(std::move(atom));
    auto id = static_cast<std::uint32_t>(env.atoms.size() - 1);
    interned.emplace(key, id);
    return id;
  };

  std::vector<XorForm> initial_cells(f.cells.size());
  for (const auto &in : f.inputs) {
    Atom a;
    a.name = f.input_name(in);
    if (in.label == Label::Secret)
      a.secret_support = {a.name};
    if (in.label == Label::Random)
      a.random_support = a.dominant = {a.name};
    env.atoms.push_back(a);
    XorForm form;
    form.atoms = {static_cast<std::uint32_t>(env.atoms.size() - 1)};
    if (in.in_memory)
      initial_cells[in.index] = form;
    else
      env.temp_forms[in.index] = form;
  }

  auto operand_form = [&](const Operand &o) {
    if (o.is_imm) {
      XorForm c;
      c.constant = static_cast<std::uint8_t>(o.value);
      return c;
    }
    return env.temp_forms[o.value];
  };

  std::vector<std::optional<std::vector<XorForm>>> out_state(f.blocks.size());
  std::vector<std::vector<BlockId>> preds(f.blocks.size());
  for (const auto &b : f.blocks)
    for (auto s : b.successors)
      preds[s].push_back(b.id);

  for (const auto &b : f.blocks) {
    std::vector<XorForm> cells;
    if (b.id == 0) {
      cells = initial_cells;
    } else {
      cells.assign(f.cells.size(), XorForm{});
      for (std::size_t c = 0; c < f.cells.size(); ++c) {
        std::vector<XorForm> incoming;
        for (auto p : preds[b.id])
          if (out_state[p])
            incoming.push_back((*out_state[p])[c]);
        if (incoming.empty())
          continue;
        bool same = std::all_of(incoming.begin(), incoming.end(),
                                [&](const XorForm &x) { return x == incoming[0]; });
        if (same) {
          cells[c] = incoming[0];
          continue;
        }
        Atom j;
        j.name = "join(@" + f.cells[c].name + ",block " + std::to_string(b.id) + ")";
        for (const auto &x : incoming) {
          auto t = env.type_of(x);
          j.secret_support.insert(t.secret_support.begin(), t.secret_support.end());
          j.random_support.insert(t.random_support.begin(), t.random_support.end());
        }
        XorForm jf;
        jf.atoms = {intern(-1, (b.id << 16) | static_cast<std::uint32_t>(c), {}, {}, j)};
        cells[c] = jf;
      }
    }

    for (const auto &op : b.ops) {
      switch (op.opcode) {
      case Opcode::Xor:
        env.temp_forms[*op.def] = xor_forms(operand_form(op.uses[0]), operand_form(op.uses[1]));
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::And:
      case Opcode::Or: {
        XorForm a = operand_form(op.uses[0]), c = operand_form(op.uses[1]);
        XorForm r;
        if (a.atoms.empty() && c.atoms.empty()) {
          r.constant = fold(op.opcode, a.constant, c.constant);
        } else {
          bool arith = op.opcode == Opcode::Add || op.opcode == Opcode::Sub;
          Atom atom = combine(env, a, c, arith);
          atom.name = std::string(to_string(op.opcode)) + "(" + f.temps[*op.def].name + ")";
          if (op.commutative() && c < a)
            std::swap(a, c);
          r.atoms = {intern(static_cast<int>(op.opcode), 0, a, c, atom)};
        }
        env.temp_forms[*op.def] = r;
        break;
      }
      case Opcode::Mov:
      case Opcode::Copy:
        env.temp_forms[*op.def] = operand_form(op.uses[0]);
        break;
      case Opcode::Li:
        env.temp_forms[*op.def] = operand_form(op.uses[0]);
        break;
      case Opcode::Ld:
        env.temp_forms[*op.def] = cells[*op.cell];
        env.mem_forms[op.id] = cells[*op.cell];
        break;
      case Opcode::St:
        cells[*op.cell] = operand_form(op.uses[0]);
        env.mem_forms[op.id] = cells[*op.cell];
        break;
      case Opcode::Beq:
      case Opcode::Bne:
        env.conditions[b.id] =
            atom_type(combine(env, operand_form(op.uses[0]), operand_form(op.uses[1]), true));
        break;
      case Opcode::B:
      case Opcode::Ret:
      case Opcode::Nop:
        break;
      }
    }
    out_state[b.id] = std::move(cells);
  }

  env.types.reserve(f.temps.size());
  for (const auto &form : env.temp_forms)
    env.types.push_back(env.type_of(form));
  return env;
}

// ---------------------------------------------------------------------------
// Paths

std::vector<std::vector<BlockId>> get_paths(BlockId n, const BlockGraph &g) {
  struct Entry {
    std::vector<BlockId> path;
    std::size_t seq;
  };
  std::vector<Entry> P;
  std::vector<std::vector<BlockId>> W;
  std::size_t seq = 0;
  P.push_back({{n}, seq++});

  auto has_cycle = [&] {
    for (const auto &e : P) {
      std::set<BlockId> seen(e.path.begin(), e.path.end());
      if (seen.size() != e.path.size())
        return true;
    }
    return false;
  };
  auto all_paths = [&] {
    auto out = W;
    for (const auto &e : P)
      out.push_back(e.path);
    std::sort(out.begin(), out.end());
    return out;
  };
  auto has_sink = [&] {
    auto paths = all_paths();
    if (paths.size() < 2)
      return false;
    return std::all_of(paths.begin(), paths.end(),
                       [&](const auto &p) { return p.back() == paths[0].back(); });
  };

  while (!P.empty()) {
    if (has_cycle())
      throw PathError("cycle detected while extracting paths from block " + std::to_string(n));
    auto top = std::min_element(P.begin(), P.end(), [](const Entry &a, const Entry &b) {
      return std::make_pair(a.path.back(), a.seq) < std::make_pair(b.path.back(), b.seq);
    });
    BlockId h = top->path.back();
    const auto &succ = g.successors.at(h);
    if (succ.empty()) {
      W.push_back(top->path);
      P.erase(top);
    } else if (succ.size() == 1) {
      top->path.push_back(succ[0]);
      if (has_sink())
        return all_paths();
    } else {
      auto p1 = top->path, p2 = top->path;
      p1.push_back(succ[0]);
      p2.push_back(succ[1]);
      P.erase(top);
      P.push_back({p1, seq++});
      P.push_back({p2, seq++});
    }
  }
  std::sort(W.begin(), W.end());
  return W;
}

std::vector<SecretPathSet> extract_secret_path_sets(const FunctionIR &f, const TypeEnv &env) {
  auto g = build_cfg(f);
  std::vector<SecretPathSet> out;
  for (const auto &[block, type] : env.conditions)
    if (type.label == Label::Secret)
      out.push_back({block, get_paths(block, g)});
  return out;
}

// ---------------------------------------------------------------------------
// Balancing transformations

namespace {

FunctionIR insert_block(const FunctionIR &f, BlockId pos, Block nb) {
  FunctionIR g = f;
  for (auto &b : g.blocks) {
    if (b.id >= pos)
      ++b.id;
    for (auto &op : b.ops)
      if (op.target && *op.target >= pos)
        ++*op.target;
  }
  nb.id = pos;
  g.blocks.insert(g.blocks.begin() + pos, std::move(nb));
  return g;
}

unsigned worst_latency(const Operation &op) {
  unsigned base = 1;
  if (op.opcode == Opcode::Ld || op.opcode == Opcode::St)
    base = 2;
  else if (op.opcode == Opcode::B)
    base = 3;
  unsigned operands = op.def ? 1 : 0;
  for (const auto &u : op.uses)
    operands += u.is_imm ? 0 : 1;
  return base + 2 * operands;
}

struct IfThen {
  BlockId n;
  BlockId sink;
  std::vector<BlockId> arm; // blocks of the longest path strictly between n and sink
};

/// Recognizes a secret if-then: the branch jumps straight to the sink while
/// the fall-through arm reaches it through more blocks. Returns nullopt when
/// all paths already have the same block count.
std::optional<IfThen> if_then_shape(const FunctionIR &f, const SecretPathSet &s) {
  std::size_t shortest = SIZE_MAX, longest = 0;
  for (const auto &p : s.paths) {
    shortest = std::min(shortest, p.size());
    longest = std::max(longest, p.size());
  }
  if (s.paths.size() < 2 || shortest == longest)
    return std::nullopt;
  const Operation *term = f.blocks.at(s.branch_block).terminator();
  if (!term || !is_conditional_branch(term->opcode))
    throw TransformError("block " + std::to_string(s.branch_block) +
                         " does not end in a conditional branch");
  BlockId target = *term->target;
  bool direct = std::any_of(s.paths.begin(), s.paths.end(), [&](const auto &p) {
    return p.size() == 2 && p[1] == target;
  });
  bool common_sink = std::all_of(s.paths.begin(), s.paths.end(),
                                 [&](const auto &p) { return p.back() == target; });
  if (!direct || !common_sink)
    throw TransformError("secret branch in block " + std::to_string(s.branch_block) +
                         " is not an if-then whose branch jumps to the join block");
  IfThen shape{s.branch_block, target, {}};
  for (const auto &p : s.paths)
    if (p.size() == longest && shape.arm.empty())
      shape.arm.assign(p.begin() + 1, p.end() - 1);
  return shape;
}

/// Inverts the branch so the arm becomes the taken side and the new block
/// (at n+1) falls through from n and jumps to the sink.
TransformResult place_balancing_block(const FunctionIR &f, const IfThen &shape,
                                      std::vector<Operation> body) {
  Block nb;
  nb.weight = f.blocks[shape.n].weight;
  std::uint32_t next = f.next_op_id();
  for (auto &op : body)
    op.id = next++;
  Operation jump;
  jump.id = next++;
  jump.opcode = Opcode::B;
  jump.target = shape.sink + 1;
  body.push_back(jump);
  nb.ops = std::move(body);
  FunctionIR g = insert_block(f, shape.n + 1, std::move(nb));
  Operation &br = g.blocks[shape.n].ops.back();
  br.opcode = br.opcode == Opcode::Beq ? Opcode::Bne : Opcode::Beq;
  br.target = shape.n + 2;
  // ops of the new block reference temps through their ids; fix def sites
  for (const auto &op : g.blocks[shape.n + 1].ops)
    if (op.def)
      g.temps[*op.def].def_site = op.id;
  validate(g);
  return {std::move(g), true, {}};
}

} // namespace

unsigned ebb_nop_bound(const FunctionIR &f, const SecretPathSet &s) {
  unsigned worst = 0;
  for (const auto &p : s.paths) {
    unsigned c = 0;
    for (std::size_t i = 1; i + 1 < p.size(); ++i)
      for (const auto &op : f.blocks[p[i]].ops)
        c += worst_latency(op);
    worst = std::max(worst, c);
  }
  return worst + 2;
}

TransformResult balance_ebb(const FunctionIR &f, const SecretPathSet &s) {
  auto shape = if_then_shape(f, s);
  if (!shape)
    return {f, false,
            {"block " + std::to_string(s.branch_block) +
             ": secret paths already have equal block counts; EBB not applied"}};
  std::vector<Operation> body;
  unsigned bound = ebb_nop_bound(f, s);
  for (unsigned i = 0; i < bound; ++i) {
    Operation nop;
    nop.opcode = Opcode::Nop;
    nop.optional = true;
    body.push_back(nop);
  }
  return place_balancing_block(f, *shape, std::move(body));
}

TransformResult balance_cbb(const FunctionIR &f, const SecretPathSet &s) {
  auto shape = if_then_shape(f, s);
  if (!shape)
    return {f, false,
            {"block " + std::to_string(s.branch_block) +
             ": secret paths already have equal block counts; CBB not applied"}};
  if (shape->arm.size() != 1)
    throw TransformError("CBB needs a single-block arm; block " + std::to_string(shape->n) +
                         " has a " + std::to_string(shape->arm.size()) +
                         "-block arm (use EBB)");
  FunctionIR g = f;
  auto fresh_temp = [&](const std::string &base) {
    std::string name = base + "_cbb";
    for (int k = 2; g.find_temp(name); ++k)
      name = base + "_cbb" + std::to_string(k);
    g.temps.push_back({name, 8, 0, std::nullopt});
    return static_cast<TempId>(g.temps.size() - 1);
  };
  auto fresh_cell = [&](const std::string &base) {
    std::string name = base + "_cbb";
    for (int k = 2; g.find_cell(name); ++k)
      name = base + "_cbb" + std::to_string(k);
    g.cells.push_back({name, std::nullopt});
    return static_cast<CellId>(g.cells.size() - 1);
  };
  std::map<TempId, TempId> temp_map;
  std::map<CellId, CellId> cell_map;
  std::vector<Operation> body;
  for (const auto &op : f.blocks[shape->arm[0]].ops) {
    if (is_terminator(op.opcode))
      continue;
    Operation c = op;
    for (auto &u : c.uses)
      if (!u.is_imm && temp_map.count(u.value))
        u.value = temp_map[u.value];
    if (c.cell) {
      if (op.opcode == Opcode::St && !cell_map.count(*op.cell))
        cell_map[*op.cell] = fresh_cell(f.cells[*op.cell].name);
      if (cell_map.count(*op.cell))
        c.cell = cell_map[*op.cell];
    }
    if (op.def) {
      temp_map[*op.def] = fresh_temp(f.temps[*op.def].name);
      c.def = temp_map[*op.def];
    }
    // an optional li copied into the other arm loses its dominating original
    if (c.opcode == Opcode::Li)
      c.optional = false;
    body.push_back(c);
  }
  return place_balancing_block(g, *shape, std::move(body));
}

// ---------------------------------------------------------------------------
// Masking operand-order restoration

MaskOrderResult restore_mask_order(const FunctionIR &f) {
  MaskOrderResult res{f, 0, {}};
  FunctionIR &g = res.function;
  for (int iter = 0; iter < 1000; ++iter) {
    TypeEnv env = infer_types(g);
    std::vector<unsigned> uses(g.temps.size(), 0);
    std::map<TempId, std::pair<BlockId, std::size_t>> def_pos;
    for (const auto &b : g.blocks)
      for (std::size_t i = 0; i < b.ops.size(); ++i) {
        for (const auto &u : b.ops[i].uses)
          if (!u.is_imm)
            ++uses[u.value];
        if (b.ops[i].def)
          def_pos[*b.ops[i].def] = {b.id, i};
      }
    auto form = [&](const Operand &o) {
      if (o.is_imm) {
        XorForm c;
        c.constant = static_cast<std::uint8_t>(o.value);
        return c;
      }
      return env.temp_forms[o.value];
    };

    bool rewrote = false;
    for (auto &b : g.blocks) {
      for (std::size_t i = 0; i < b.ops.size() && !rewrote; ++i) {
        Operation &user = b.ops[i];
        if (user.opcode != Opcode::Xor)
          continue;
        for (int side = 0; side < 2 && !rewrote; ++side) {
          const Operand &inner_op = user.uses[side];
          if (inner_op.is_imm)
            continue;
          TempId t1 = inner_op.value;
          auto dp = def_pos.find(t1);
          if (dp == def_pos.end() || uses[t1] != 1)
            continue;
          auto [ib, ii] = dp->second;
          Operation inner = g.blocks[ib].ops[ii];
          if (inner.opcode != Opcode::Xor || env.types[t1].label != Label::Secret)
            continue;
          Operand c = user.uses[1 - side];
          Operand a = inner.uses[0], bb = inner.uses[1];
          // try pairing c with b (a stays outside), then c with a
          std::optional<std::pair<Operand, Operand>> pick;
          Operand outside;
          for (int k = 0; k < 2 && !pick; ++k) {
            Operand keep = k == 0 ? a : bb, pair = k == 0 ? bb : a;
            if (pair.is_imm && c.is_imm)
              continue;
            if (keep.is_imm)
              continue;
            if (env.secret_dependent(xor_forms(form(pair), form(c))))
              continue;
            pick = pair.is_imm ? std::make_pair(c, pair) : std::make_pair(pair, c);
            outside = keep;
          }
          if (!pick)
            continue;
          Operation moved = inner;
          moved.uses = {pick->first, pick->second};
          Operation newuser = user;
          newuser.uses = {Operand::temp(t1), outside};
          BlockId ub = b.id;
          std::size_t ui = i;
          g.blocks[ib].ops.erase(g.blocks[ib].ops.begin() + static_cast<long>(ii));
          if (ib == ub && ii < ui)
            --ui;
          g.blocks[ub].ops[ui] = newuser;
          g.blocks[ub].ops.insert(g.blocks[ub].ops.begin() + static_cast<long>(ui), moved);
          ++res.rewrites;
          rewrote = true;
        }
      }
      if (rewrote)
        break;
    }
    if (!rewrote)
      break;
  }
  validate(g);
  TypeEnv env = infer_types(g);
  for (const auto &b : g.blocks)
    for (const auto &op : b.ops)
      if (op.opcode == Opcode::Xor && env.types[*op.def].label == Label::Secret)
        res.residual.push_back(*op.def);
  return res;
}

// ---------------------------------------------------------------------------
// Leak pairs

LeakPairSets gen_leak_pairs(const FunctionIR &f, const TypeEnv &env) {
  LeakPairSets out;
  std::vector<std::pair<std::uint32_t, XorForm>> values;
  for (std::size_t t = 0; t < f.temps.size(); ++t)
    values.emplace_back(static_cast<std::uint32_t>(t), env.temp_forms[t]);
  values.emplace_back(kInitialContent, XorForm{});
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j)
      if (env.secret_dependent(xor_forms(values[i].second, values[j].second)))
        out.rpairs.insert({std::min(values[i].first, values[j].first),
                           std::max(values[i].first, values[j].first)});

  std::vector<std::pair<std::uint32_t, XorForm>> mem(env.mem_forms.begin(), env.mem_forms.end());
  mem.emplace_back(kInitialContent, XorForm{});
  for (std::size_t i = 0; i < mem.size(); ++i)
    for (std::size_t j = i + 1; j < mem.size(); ++j)
      if (env.secret_dependent(xor_forms(mem[i].second, mem[j].second)))
        out.mpairs.insert({std::min(mem[i].first, mem[j].first),
                           std::max(mem[i].first, mem[j].first)});
  return out;
}

namespace {

std::string join_names(const std::set<std::string> &s) {
  std::string out = "{";
  bool first = true;
  for (const auto &x : s) {
    out += (first ? "" : ",") + x;
    first = false;
  }
  return out + "}";
}

} // namespace

std::string analysis_report(const FunctionIR &f, const TypeEnv &env,
                            const std::vector<SecretPathSet> &psets, const LeakPairSets &pairs) {
  std::ostringstream os;
  os << "function " << f.name << "\n";
  os << "types\n";
  for (std::size_t t = 0; t < f.temps.size(); ++t) {
    const auto &ty = env.types[t];
    os << "  " << f.temps[t].name << " " << to_string(ty.label)
       << " dominant=" << join_names(ty.dominant_randoms)
       << " secret=" << join_names(ty.secret_support)
       << " random=" << join_names(ty.random_support) << "\n";
  }
  os << "conditions\n";
  for (const auto &[b, ty] : env.conditions)
    os << "  block " << b << " " << to_string(ty.label) << "\n";
  os << "secret path sets\n";
  for (const auto &s : psets) {
    os << "  branch " << s.branch_block << ":";
    for (const auto &p : s.paths) {
      os << " [";
      for (std::size_t i = 0; i < p.size(); ++i)
        os << (i ? " " : "") << p[i];
      os << "]";
    }
    os << "\n";
  }
  auto temp_name = [&](std::uint32_t t) {
    return t == kInitialContent ? std::string("<initial>") : f.temps[t].name;
  };
  auto mem_name = [&](std::uint32_t id) {
    if (id == kInitialContent)
      return std::string("<initial>");
    const Operation *op = f.find_op(id);
    return std::string(to_string(op->opcode)) + "#" + std::to_string(id) + "(@" +
           f.cells[*op->cell].name + ")";
  };
  os << "rpairs " << pairs.rpairs.size() << "\n";
  for (const auto &[a, b] : pairs.rpairs)
    os << "  " << temp_name(a) << " " << temp_name(b) << "\n";
  os << "mpairs " << pairs.mpairs.size() << "\n";
  for (const auto &[a, b] : pairs.mpairs)
    os << "  " << mem_name(a) << " " << mem_name(b) << "\n";
  return os.str();
}

} // namespace secdiv
