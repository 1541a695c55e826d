#include "secdiv/solver.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <limits>
#include <map>
#include <random>
#include <set>

namespace secdiv {

std::string_view to_string(SolveStatus s) {
  switch (s) {
  case SolveStatus::Optimal:
    return "OPTIMAL";
  case SolveStatus::Timeout:
    return "TIMEOUT";
  case SolveStatus::Unsat:
    return "UNSAT";
  }
  return "?";
}

int distance(const Solution &a, const Solution &b, const CopProblem &prob) {
  if (a.values.size() != prob.vars.size() || b.values.size() != prob.vars.size())
    throw std::invalid_argument("distance: solutions do not match the problem");
  int d = 0;
  for (int v : prob.decision_vars())
    d += a.values[v] != b.values[v] ? 1 : 0;
  return d;
}

namespace {

using Clock = std::chrono::steady_clock;
constexpr int kForever = std::numeric_limits<int>::max();

struct Abort {};

class Rng {
public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  template <class T> void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[g_() % i]);
  }
  bool coin() { return (g_() >> 17) & 1; }
  std::uint64_t below(std::uint64_t n) { return g_() % n; }

private:
  std::mt19937_64 g_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Value classes and interference for a fixed schedule, computed from
/// reachability rather than dataflow.
struct LiveInfo {
  std::vector<TempId> cls;                // by temp
  std::vector<std::vector<char>> interferes; // by class temp id
};

LiveInfo live_info(const CopProblem &prob, const std::vector<int> &vals) {
  const std::size_t nt = prob.temps.size(), nb = prob.blocks.size();
  auto active = [&](std::size_t i) { return vals[prob.active_var[i]] == 1; };
  auto cycle = [&](std::size_t i) { return vals[prob.cycle_var[i]]; };
  LiveInfo li;
  li.cls.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    TempId c = static_cast<TempId>(t);
    while (prob.temps[c].def_op && !active(*prob.temps[c].def_op) &&
           prob.ops[*prob.temps[c].def_op].alias)
      c = *prob.ops[*prob.temps[c].def_op].alias;
    li.cls[t] = c;
  }
  // reachability (reflexive) over the block DAG
  std::vector<std::vector<char>> reach(nb, std::vector<char>(nb, 0));
  for (std::size_t b = nb; b-- > 0;) {
    reach[b][b] = 1;
    for (auto s : prob.function.blocks[b].successors)
      for (std::size_t k = 0; k < nb; ++k)
        if (reach[s][k])
          reach[b][k] = 1;
  }
  std::vector<int> def_block(nt, -2), def_cycle(nt, 0);
  std::vector<std::vector<int>> last_use(nt, std::vector<int>(nb, -2));
  for (std::size_t t = 0; t < nt; ++t)
    if (li.cls[t] == t) {
      if (!prob.temps[t].def_op) {
        def_block[t] = -1;
      } else if (active(*prob.temps[t].def_op)) {
        def_block[t] = static_cast<int>(prob.ops[*prob.temps[t].def_op].block);
        def_cycle[t] = cycle(*prob.temps[t].def_op);
      }
    }
  for (std::size_t i = 0; i < prob.ops.size(); ++i) {
    if (!active(i))
      continue;
    for (auto u : prob.ops[i].uses) {
      auto c = li.cls[u];
      auto &lu = last_use[c][prob.ops[i].block];
      lu = std::max(lu, cycle(i));
    }
  }
  auto live_in = [&](TempId c, std::size_t b) {
    int d = def_block[c];
    if (d == -2 || d == static_cast<int>(b))
      return false;
    if (d >= 0 && !reach[d][b])
      return false;
    for (std::size_t u = 0; u < nb; ++u)
      if (last_use[c][u] != -2 && reach[b][u])
        return true;
    return false;
  };
  li.interferes.assign(nt, std::vector<char>(nt, 0));
  for (std::size_t b = 0; b < nb; ++b) {
    struct Iv {
      TempId c;
      int s, e;
    };
    std::vector<Iv> ivs;
    for (std::size_t t = 0; t < nt; ++t) {
      if (li.cls[t] != t || def_block[t] == -2)
        continue;
      TempId c = static_cast<TempId>(t);
      bool defined_here = def_block[c] == static_cast<int>(b);
      bool in = live_in(c, b);
      if (!defined_here && !in)
        continue;
      bool out = false;
      for (auto s : prob.function.blocks[b].successors)
        out = out || live_in(c, s);
      int s = defined_here ? def_cycle[c] : -1;
      int e = out ? kForever : last_use[c][b] != -2 ? last_use[c][b] : s + 1;
      ivs.push_back({c, s, e});
    }
    for (std::size_t x = 0; x < ivs.size(); ++x)
      for (std::size_t y = x + 1; y < ivs.size(); ++y)
        if (ivs[x].s < ivs[y].e && ivs[y].s < ivs[x].e) {
          li.interferes[ivs[x].c][ivs[y].c] = 1;
          li.interferes[ivs[y].c][ivs[x].c] = 1;
        }
  }
  return li;
}

struct SearchOptions {
  bool randomize = false;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> bound;
  bool optimize = true; // branch and bound; otherwise stop at the first solution
  std::vector<const Solution *> blocking;
  int dthresh = 1;
  Clock::time_point deadline = Clock::time_point::max();
};

class Search {
public:
  Search(const CopProblem &prob, SearchOptions opts)
      : prob_(prob), opts_(std::move(opts)), rng_(opts_.seed), bound_(opts_.bound) {
    vals_.assign(prob.vars.size(), -1);
    const unsigned R = prob.profile.num_registers;
    for (std::size_t i = 0; i < prob.ops.size(); ++i) {
      if (!prob.ops[i].optional)
        vals_[prob.active_var[i]] = 1;
    }
    for (const auto &t : prob.temps)
      if (t.pinned >= 0) {
        vals_[prob.loc_var[t.id]] = t.pinned;
        vals_[prob.spilled_var[t.id]] = 0;
      }
    regs_mask_ = R >= 64 ? ~0ull : ((1ull << R) - 1);
    std::uint64_t all = prob.profile.locations() >= 64 ? ~0ull
                                                      : ((1ull << prob.profile.locations()) - 1);
    slots_mask_ = all & ~regs_mask_;

    for (std::size_t i = 0; i < prob.ops.size(); ++i)
      if (prob.ops[i].optional)
        p1_.push_back({true, i});
    // temps in definition order so alias sources come first
    std::vector<std::pair<std::pair<long, long>, TempId>> order;
    for (const auto &t : prob.temps) {
      long b = -1, pos = -1;
      if (t.def_op) {
        b = prob.ops[*t.def_op].block;
        pos = static_cast<long>(*t.def_op);
      }
      order.push_back({{b, pos}, t.id});
    }
    std::sort(order.begin(), order.end());
    for (const auto &[key, t] : order)
      if (prob.temps[t].pinned < 0)
        p1_.push_back({false, t});
  }

  /// Runs the search; returns true when it completed (not timed out).
  bool run() {
    try {
      if (!rot_possible()) {
        root_failure_ = "rot-conflict";
        return true;
      }
      if (!phase1_feasible()) {
        root_failure_ = last_failure_;
        return true;
      }
      p1(0);
    } catch (const Abort &) {
      return false;
    }
    return true;
  }

  const std::optional<Solution> &best() const { return best_; }
  std::uint64_t nodes() const { return nodes_; }
  std::string blamed_family() const {
    if (!root_failure_.empty())
      return root_failure_;
    std::string fam = "search";
    std::uint64_t most = 0;
    for (const auto &[k, v] : failures_)
      if (v > most) {
        most = v;
        fam = k;
      }
    return fam;
  }

private:
  struct P1Entry {
    bool is_active;
    std::size_t subject; // model op index or temp id
  };

  const CopProblem &prob_;
  SearchOptions opts_;
  Rng rng_;
  std::optional<std::int64_t> bound_;
  std::vector<int> vals_;
  std::vector<P1Entry> p1_;
  std::uint64_t regs_mask_ = 0, slots_mask_ = 0;
  std::uint64_t nodes_ = 0;
  std::optional<Solution> best_;
  std::map<std::string, std::uint64_t> failures_;
  std::string last_failure_, root_failure_;

  // phase 3 state
  LiveInfo live_;
  std::vector<std::uint64_t> dom_;
  std::vector<char> assigned_;
  struct Write {
    TempId temp;
    TempId cls;
  };
  std::vector<std::vector<Write>> writes_; // per cfg path
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> writes_of_; // by class
  std::vector<std::uint32_t> initial_; // initial content by register

  void tick() {
    if ((++nodes_ & 1023) == 0 && Clock::now() > opts_.deadline)
      throw Abort{};
  }

  void fail(const char *family) {
    ++failures_[family];
    last_failure_ = family;
  }

  template <class T> void order_values(std::vector<T> &v) {
    if (opts_.randomize)
      rng_.shuffle(v);
  }

  bool active(std::size_t i) const { return vals_[prob_.active_var[i]] == 1; }
  int cycle(std::size_t i) const { return vals_[prob_.cycle_var[i]]; }

  unsigned operand_count(const ModelOp &op) const {
    return static_cast<unsigned>(op.uses.size()) + (op.def ? 1 : 0);
  }

  // A mandatory definition that conflicts with every possible previous
  // register content cannot be placed anywhere.
  bool rot_possible() const {
    if (prob_.mode != SecMode::Psc)
      return true;
    for (const auto &t : prob_.temps) {
      if (!t.def_op || prob_.ops[*t.def_op].optional)
        continue;
      if (prob_.allow_spill)
        continue;
      bool placeable = !prob_.pairs.has_rpair(kInitialContent, t.id);
      for (const auto &u : prob_.temps)
        placeable = placeable || (u.id != t.id && !prob_.pairs.has_rpair(u.id, t.id));
      if (!placeable)
        return false;
    }
    return true;
  }

  // ---- phase 1: activation and spill flags

  void latency_bounds(std::size_t i, long &lo, long &hi) const {
    const ModelOp &op = prob_.ops[i];
    int a = vals_[prob_.active_var[i]];
    if (a == 0) {
      lo = hi = 0;
      return;
    }
    long known = 0, unknown = 0;
    auto count = [&](TempId t) {
      int s = vals_[prob_.spilled_var[t]];
      if (s == 1)
        ++known;
      else if (s == -1)
        ++unknown;
    };
    for (auto u : op.uses)
      count(u);
    if (op.def)
      count(*op.def);
    long sc = prob_.profile.spill_access_cost;
    long base = op.base_latency + sc * known;
    lo = a == 1 ? base : 0;
    hi = base + sc * unknown;
  }

  bool phase1_feasible() {
    std::vector<long> lo(prob_.blocks.size(), 0), hi(prob_.blocks.size(), 0);
    for (std::size_t i = 0; i < prob_.ops.size(); ++i) {
      long l, h;
      latency_bounds(i, l, h);
      lo[prob_.ops[i].block] += l;
      hi[prob_.ops[i].block] += h;
    }
    std::int64_t lb = 0;
    for (const auto &b : prob_.blocks)
      lb += b.weight * lo[b.id];
    if (bound_ && lb > *bound_) {
      fail("optimality-gap");
      return false;
    }
    for (const auto &set : prob_.balance_sets) {
      long max_lo = std::numeric_limits<long>::min(), min_hi = std::numeric_limits<long>::max();
      for (const auto &p : set) {
        long l = static_cast<long>(p.taken_edges * prob_.profile.taken_branch_overhead), h = l;
        for (auto b : p.blocks) {
          l += lo[b];
          h += hi[b];
        }
        max_lo = std::max(max_lo, l);
        min_hi = std::min(min_hi, h);
      }
      if (max_lo > min_hi) {
        fail("balance");
        return false;
      }
    }
    return true;
  }

  void p1(std::size_t k) {
    tick();
    if (k == p1_.size()) {
      leaf1();
      return;
    }
    const P1Entry &e = p1_[k];
    int var;
    std::vector<int> values;
    if (e.is_active) {
      var = prob_.active_var[e.subject];
      const ModelOp &op = prob_.ops[e.subject];
      bool allowed = true;
      if (op.nop_rank > 0) {
        const auto &nops = prob_.blocks[op.block].nops;
        allowed = vals_[prob_.active_var[nops[op.nop_rank - 1]]] == 1;
      }
      values = allowed ? std::vector<int>{0, 1} : std::vector<int>{0};
    } else {
      TempId t = static_cast<TempId>(e.subject);
      var = prob_.spilled_var[t];
      const auto &mt = prob_.temps[t];
      if (mt.def_op && !active(*mt.def_op) && prob_.ops[*mt.def_op].alias)
        values = {vals_[prob_.spilled_var[*prob_.ops[*mt.def_op].alias]]};
      else if (!prob_.allow_spill)
        values = {0};
      else
        values = {0, 1};
    }
    order_values(values);
    for (int v : values) {
      vals_[var] = v;
      if (phase1_feasible()) {
        p1(k + 1);
        if (!opts_.optimize && best_)
          break;
      }
      vals_[var] = -1;
    }
    vals_[var] = -1;
  }

  void leaf1() {
    std::int64_t obj = 0;
    for (const auto &b : prob_.blocks) {
      long c = 0;
      for (auto i : b.ops) {
        long l, h;
        latency_bounds(i, l, h);
        c += l;
      }
      vals_[prob_.cost_var[b.id]] = static_cast<int>(c);
      obj += b.weight * c;
    }
    if (bound_ && obj > *bound_) {
      fail("optimality-gap");
      return;
    }
    for (std::size_t i = 0; i < prob_.ops.size(); ++i)
      if (!active(i)) {
        vals_[prob_.cycle_var[i]] = 0;
        vals_[prob_.instr_var[i]] = 0;
        vals_[prob_.swap_var[i]] = 0;
      }
    bool found = p2(0, 0, 0);
    if (found) {
      best_->scaled_objective = obj;
      best_->objective = Rational(obj, prob_.weight_scale);
      if (opts_.optimize)
        bound_ = obj - 1;
    }
    for (std::size_t i = 0; i < prob_.ops.size(); ++i) {
      vals_[prob_.cycle_var[i]] = -1;
      if (prob_.ops[i].instr_alts > 1 || !active(i))
        vals_[prob_.instr_var[i]] = -1;
      if (prob_.ops[i].swappable || !active(i))
        vals_[prob_.swap_var[i]] = -1;
    }
  }

  // ---- phase 2: issue cycles, block by block in time order

  unsigned latency(std::size_t i) const {
    long l, h;
    latency_bounds(i, l, h);
    return static_cast<unsigned>(l);
  }

  bool p2(std::size_t bi, std::size_t placed, int time) {
    tick();
    if (bi == prob_.blocks.size())
      return leaf2();
    const ModelBlock &b = prob_.blocks[bi];
    std::vector<std::size_t> act;
    for (auto i : b.ops)
      if (active(i))
        act.push_back(i);
    if (placed == act.size())
      return p2(bi + 1, 0, 0);
    std::vector<std::size_t> cand;
    bool nop_taken = false;
    for (auto i : act) {
      if (vals_[prob_.cycle_var[i]] != -1)
        continue;
      const ModelOp &op = prob_.ops[i];
      if (op.terminator && placed + 1 != act.size())
        continue;
      bool ready = std::all_of(op.preds.begin(), op.preds.end(), [&](std::size_t p) {
        return !active(p) || vals_[prob_.cycle_var[p]] != -1;
      });
      if (!ready)
        continue;
      if (op.nop_rank >= 0) {
        if (nop_taken)
          continue; // only the lowest-ranked pending NOP
        nop_taken = true;
      }
      cand.push_back(i);
    }
    order_values(cand);
    for (auto i : cand) {
      vals_[prob_.cycle_var[i]] = time;
      bool found = p2(bi, placed + 1, time + static_cast<int>(latency(i)));
      vals_[prob_.cycle_var[i]] = -1;
      if (found)
        return true;
    }
    return false;
  }

  std::vector<std::size_t> block_order(const ModelBlock &b) const {
    std::vector<std::size_t> out;
    for (auto i : b.ops)
      if (active(i))
        out.push_back(i);
    std::sort(out.begin(), out.end(), [&](auto x, auto y) { return cycle(x) < cycle(y); });
    return out;
  }

  bool memory_order_ok() {
    if (prob_.mode != SecMode::Psc)
      return true;
    for (const auto &path : prob_.cfg_paths) {
      std::uint32_t bus = kInitialContent;
      for (auto b : path)
        for (auto i : block_order(prob_.blocks[b])) {
          const auto &op = prob_.ops[i];
          if (op.opcode != Opcode::Ld && op.opcode != Opcode::St)
            continue;
          if (prob_.pairs.has_mpair(bus, op.id)) {
            fail("mre-conflict");
            return false;
          }
          bus = op.id;
        }
    }
    return true;
  }

  // ---- phase 3: locations

  bool leaf2() {
    if (!memory_order_ok())
      return false;
    live_ = live_info(prob_, vals_);
    const std::size_t nt = prob_.temps.size();
    dom_.assign(nt, 0);
    assigned_.assign(nt, 0);
    for (std::size_t t = 0; t < nt; ++t) {
      if (live_.cls[t] != t)
        continue;
      if (prob_.temps[t].pinned >= 0) {
        assigned_[t] = 1;
        dom_[t] = 1ull << prob_.temps[t].pinned;
      } else {
        dom_[t] = vals_[prob_.spilled_var[t]] == 1 ? slots_mask_ : regs_mask_;
      }
    }
    for (std::size_t t = 0; t < nt; ++t)
      if (live_.cls[t] == t && assigned_[t])
        for (std::size_t u = 0; u < nt; ++u)
          if (live_.cls[u] == u && live_.interferes[t][u]) {
            if (assigned_[u] && dom_[u] == dom_[t]) {
              fail("interference");
              return false;
            }
            if (!assigned_[u]) {
              dom_[u] &= ~dom_[t];
              if (!dom_[u]) {
                fail("interference");
                return false;
              }
            }
          }
    if (prob_.mode == SecMode::Psc)
      build_writes();
    return p3();
  }

  void build_writes() {
    writes_.clear();
    writes_of_.assign(prob_.temps.size(), {});
    for (std::size_t p = 0; p < prob_.cfg_paths.size(); ++p) {
      std::vector<Write> seq;
      for (auto b : prob_.cfg_paths[p])
        for (auto i : block_order(prob_.blocks[b]))
          if (prob_.ops[i].def) {
            TempId d = *prob_.ops[i].def;
            writes_of_[live_.cls[d]].push_back({p, seq.size()});
            seq.push_back({d, live_.cls[d]});
          }
      writes_.push_back(std::move(seq));
    }
    initial_.assign(prob_.profile.num_registers, kInitialContent);
    for (const auto &t : prob_.temps)
      if (t.pinned >= 0)
        initial_[t.pinned] = t.id;
  }

  bool has_loc(TempId c, int r) const { return (dom_[c] >> r) & 1; }

  bool rot_ok(TempId c, int r) {
    if (prob_.mode != SecMode::Psc || r >= static_cast<int>(prob_.profile.num_registers))
      return true;
    for (const auto &[p, i] : writes_of_[c]) {
      const auto &seq = writes_[p];
      std::optional<std::uint32_t> prev;
      bool unknown = false;
      for (std::size_t j = i; j-- > 0;) {
        TempId cj = seq[j].cls;
        if (assigned_[cj]) {
          if (has_loc(cj, r)) {
            prev = seq[j].temp;
            break;
          }
        } else if (has_loc(cj, r)) {
          unknown = true;
          break;
        }
      }
      if (!prev && !unknown)
        prev = initial_[r];
      if (prev && prob_.pairs.has_rpair(*prev, seq[i].temp))
        return false;
      for (std::size_t j = i + 1; j < seq.size(); ++j) {
        TempId cj = seq[j].cls;
        if (assigned_[cj]) {
          if (has_loc(cj, r)) {
            if (prob_.pairs.has_rpair(seq[i].temp, seq[j].temp))
              return false;
            break;
          }
        } else if (has_loc(cj, r)) {
          break;
        }
      }
    }
    return true;
  }

  bool p3() {
    tick();
    const std::size_t nt = prob_.temps.size();
    std::optional<TempId> pick;
    int best_size = 1000;
    for (std::size_t t = 0; t < nt; ++t) {
      if (live_.cls[t] != t || assigned_[t])
        continue;
      int sz = std::popcount(dom_[t]);
      if (sz < best_size) {
        best_size = sz;
        pick = static_cast<TempId>(t);
      }
    }
    if (!pick)
      return leaf3();
    TempId c = *pick;
    std::vector<int> values;
    for (int r = 0; r < 64; ++r)
      if (has_loc(c, r))
        values.push_back(r);
    order_values(values);
    const std::uint64_t saved = dom_[c];
    for (int r : values) {
      std::uint64_t bit = 1ull << r;
      dom_[c] = bit;
      assigned_[c] = 1;
      std::vector<std::pair<TempId, std::uint64_t>> trail;
      bool ok = true;
      for (std::size_t u = 0; u < nt && ok; ++u) {
        if (live_.cls[u] != u || assigned_[u] || !live_.interferes[c][u] || !(dom_[u] & bit))
          continue;
        trail.push_back({static_cast<TempId>(u), dom_[u]});
        dom_[u] &= ~bit;
        if (!dom_[u]) {
          fail("interference");
          ok = false;
        }
      }
      if (ok && !rot_ok(c, r)) {
        fail("rot-conflict");
        ok = false;
      }
      if (ok && p3())
        return true;
      for (auto it = trail.rbegin(); it != trail.rend(); ++it)
        dom_[it->first] = it->second;
      assigned_[c] = 0;
      dom_[c] = saved;
    }
    return false;
  }

  bool rot_full_ok() {
    if (prob_.mode != SecMode::Psc)
      return true;
    for (const auto &seq : writes_) {
      std::vector<std::uint32_t> last = initial_;
      for (const auto &w : seq) {
        int r = std::countr_zero(dom_[w.cls]);
        if (r >= static_cast<int>(prob_.profile.num_registers))
          continue;
        if (prob_.pairs.has_rpair(last[r], w.temp))
          return false;
        last[r] = w.temp;
      }
    }
    return true;
  }

  bool leaf3() {
    if (!rot_full_ok()) {
      fail("rot-conflict");
      return false;
    }
    for (std::size_t t = 0; t < prob_.temps.size(); ++t) {
      int r = std::countr_zero(dom_[live_.cls[t]]);
      vals_[prob_.loc_var[t]] = r;
      vals_[prob_.spilled_var[t]] = r >= static_cast<int>(prob_.profile.num_registers) ? 1 : 0;
    }
    bool found = phase4();
    for (const auto &t : prob_.temps)
      if (t.pinned < 0)
        vals_[prob_.loc_var[t.id]] = -1;
    return found;
  }

  // ---- phase 4: instruction alternatives and operand order

  std::vector<int> p4_vars_;
  std::vector<int> diffs_;

  bool phase4() {
    p4_vars_.clear();
    for (std::size_t i = 0; i < prob_.ops.size(); ++i) {
      if (!active(i))
        continue;
      if (prob_.ops[i].instr_alts > 1)
        p4_vars_.push_back(prob_.instr_var[i]);
      else
        vals_[prob_.instr_var[i]] = 0;
      if (prob_.ops[i].swappable)
        p4_vars_.push_back(prob_.swap_var[i]);
      else
        vals_[prob_.swap_var[i]] = 0;
    }
    diffs_.assign(opts_.blocking.size(), 0);
    for (std::size_t k = 0; k < opts_.blocking.size(); ++k)
      for (int v : prob_.decision_vars())
        if (vals_[v] != -1 && vals_[v] != opts_.blocking[k]->values[v])
          ++diffs_[k];
    return p4(0);
  }

  bool p4(std::size_t k) {
    tick();
    const int remaining = static_cast<int>(p4_vars_.size() - k);
    for (int d : diffs_)
      if (d + remaining < opts_.dthresh) {
        fail("distance");
        return false;
      }
    if (k == p4_vars_.size()) {
      Solution s;
      s.values = vals_;
      s.seed = opts_.seed;
      best_ = std::move(s);
      return true;
    }
    int var = p4_vars_[k];
    std::vector<int> values;
    for (int v = prob_.vars[var].lo; v <= prob_.vars[var].hi; ++v)
      values.push_back(v);
    order_values(values);
    for (int v : values) {
      vals_[var] = v;
      for (std::size_t b = 0; b < diffs_.size(); ++b)
        diffs_[b] += v != opts_.blocking[b]->values[var] ? 1 : 0;
      bool found = p4(k + 1);
      for (std::size_t b = 0; b < diffs_.size(); ++b)
        diffs_[b] -= v != opts_.blocking[b]->values[var] ? 1 : 0;
      vals_[var] = -1;
      if (found)
        return true;
    }
    return false;
  }
};

Clock::time_point deadline_after(double secs) {
  if (secs <= 0 || secs > 1e7)
    return Clock::time_point::max();
  return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(secs));
}

} // namespace

SolveResult solve_optimal(const CopProblem &prob, double budget_secs, std::uint64_t seed) {
  SearchOptions opts;
  opts.seed = seed;
  opts.bound = prob.bound;
  opts.deadline = deadline_after(budget_secs);
  Search s(prob, opts);
  bool complete = s.run();
  SolveResult r;
  r.nodes = s.nodes();
  r.solution = s.best();
  if (r.solution)
    r.solution->seed = seed;
  if (!complete)
    r.status = SolveStatus::Timeout;
  else if (r.solution)
    r.status = SolveStatus::Optimal;
  else {
    r.status = SolveStatus::Unsat;
    r.unsat_family = s.blamed_family();
  }
  return r;
}

VariantPool diversify(const CopProblem &prob, const Solution &best, int n, Rational gap,
                      int dthresh, double budget_secs, std::uint64_t seed) {
  VariantPool pool;
  pool.gap = gap;
  pool.dthresh = dthresh;
  CopProblem bounded = with_bound(prob, gap, best.objective);
  pool.variants.push_back(best);
  auto deadline = deadline_after(budget_secs);
  pool.reason = "COMPLETE";
  for (int k = 1; k < n; ++k) {
    SearchOptions opts;
    opts.randomize = true;
    opts.seed = mix_seed(seed, static_cast<std::uint64_t>(k));
    opts.bound = bounded.bound;
    opts.optimize = false;
    opts.dthresh = dthresh;
    opts.deadline = deadline;
    for (const auto &v : pool.variants)
      opts.blocking.push_back(&v);
    Search s(bounded, opts);
    bool complete = s.run();
    if (s.best()) {
      Solution sol = *s.best();
      sol.seed = opts.seed;
      pool.variants.push_back(std::move(sol));
      continue;
    }
    pool.reason = complete ? "EXHAUSTED" : "TIMEOUT";
    break;
  }
  return pool;
}

NaivePool naive_diversify(const FunctionIR &f, const MachineProfile &p, int n, std::uint64_t seed,
                          double budget_secs) {
  NaivePool out;
  out.base_mode = auto_mode(f);
  out.prepared = prepare(f, out.base_mode);
  BuildOptions layout;
  layout.nop_per_op = true;
  const auto &prep = out.prepared;
  CopProblem secure = build_problem(prep.function, prep.pairs, prep.psets, p, out.base_mode,
                                    Rational(0), std::nullopt, layout);
  SolveResult base = solve_optimal(secure, budget_secs, seed);
  if (!base.solution)
    throw ModelError("naive diversification: no secure base solution (" +
                     std::string(to_string(base.status)) + ")");
  out.problem = build_problem(prep.function, {}, {}, p, SecMode::None, Rational(0), std::nullopt,
                              layout);
  const CopProblem &prob = out.problem;
  out.pool.gap = Rational(0);
  out.pool.dthresh = 1;
  out.pool.variants.push_back(*base.solution);
  out.pool.reason = "COMPLETE";

  const Solution &b0 = *base.solution;
  const unsigned R = p.num_registers;
  std::set<int> footprint;
  for (std::size_t t = 0; t < prob.temps.size(); ++t)
    if (b0.values[prob.loc_var[t]] < static_cast<int>(R))
      footprint.insert(b0.values[prob.loc_var[t]]);
  LiveInfo li = live_info(prob, b0.values);

  Rng rng(seed);
  int attempts = 0;
  while (static_cast<int>(out.pool.variants.size()) < n && attempts < 50 * n + 100) {
    ++attempts;
    Solution v = b0;
    v.seed = seed;
    // register renaming inside the footprint
    std::vector<TempId> reps;
    for (std::size_t t = 0; t < prob.temps.size(); ++t)
      if (li.cls[t] == t && prob.temps[t].pinned < 0 &&
          b0.values[prob.loc_var[t]] < static_cast<int>(R))
        reps.push_back(static_cast<TempId>(t));
    rng.shuffle(reps);
    std::map<TempId, int> chosen;
    for (const auto &t : prob.temps)
      if (t.pinned >= 0)
        chosen[t.id] = t.pinned;
    for (std::size_t t = 0; t < prob.temps.size(); ++t)
      if (li.cls[t] == t && b0.values[prob.loc_var[t]] >= static_cast<int>(R))
        chosen[static_cast<TempId>(t)] = b0.values[prob.loc_var[t]];
    for (auto c : reps) {
      std::vector<int> options;
      for (int r : footprint) {
        bool clash = false;
        for (const auto &[other, loc] : chosen)
          if (loc == r && li.interferes[c][other])
            clash = true;
        if (!clash)
          options.push_back(r);
      }
      chosen[c] = options.empty() ? b0.values[prob.loc_var[c]]
                                  : options[rng.below(options.size())];
    }
    for (std::size_t t = 0; t < prob.temps.size(); ++t) {
      int r = chosen.count(li.cls[t]) ? chosen[li.cls[t]] : b0.values[prob.loc_var[t]];
      v.values[prob.loc_var[t]] = r;
      v.values[prob.spilled_var[t]] = r >= static_cast<int>(R) ? 1 : 0;
    }
    // random NOP before each non-NOP instruction
    std::int64_t obj = 0;
    for (const auto &blk : prob.blocks) {
      std::vector<std::size_t> order;
      for (auto i : blk.ops)
        if (b0.values[prob.active_var[i]])
          order.push_back(i);
      std::sort(order.begin(), order.end(), [&](auto x, auto y) {
        return b0.values[prob.cycle_var[x]] < b0.values[prob.cycle_var[y]];
      });
      std::vector<bool> is_nop;
      std::vector<std::size_t> seq;
      std::size_t nops_used = 0;
      for (auto i : order)
        if (prob.ops[i].nop_rank >= 0)
          ++nops_used;
      for (auto i : order) {
        if (prob.ops[i].nop_rank < 0 && nops_used < blk.nops.size() && rng.coin()) {
          seq.push_back(SIZE_MAX);
          ++nops_used;
        }
        seq.push_back(i);
      }
      for (auto i : blk.nops) {
        v.values[prob.active_var[i]] = 0;
        v.values[prob.cycle_var[i]] = 0;
      }
      std::size_t rank = 0;
      int time = 0;
      for (auto i : seq) {
        std::size_t op = i;
        if (i == SIZE_MAX || prob.ops[i].nop_rank >= 0)
          op = blk.nops[rank++];
        v.values[prob.active_var[op]] = 1;
        v.values[prob.cycle_var[op]] = time;
        const ModelOp &m = prob.ops[op];
        unsigned slots = 0;
        for (auto u : m.uses)
          slots += v.values[prob.spilled_var[u]];
        if (m.def)
          slots += v.values[prob.spilled_var[*m.def]];
        time += static_cast<int>(m.base_latency + p.spill_access_cost * slots);
      }
      v.values[prob.cost_var[blk.id]] = time;
      obj += blk.weight * time;
    }
    v.scaled_objective = obj;
    v.objective = Rational(obj, prob.weight_scale);
    if (!check_solution(v, prob).empty())
      continue;
    if (std::any_of(out.pool.variants.begin(), out.pool.variants.end(),
                    [&](const Solution &o) { return o.values == v.values; }))
      continue;
    out.pool.variants.push_back(std::move(v));
  }
  if (static_cast<int>(out.pool.variants.size()) < n)
    out.pool.reason = "EXHAUSTED";
  return out;
}

} // namespace secdiv
