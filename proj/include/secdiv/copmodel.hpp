#ifndef SECDIV_COPMODEL_HPP
#define SECDIV_COPMODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "secdiv/machine.hpp"
#include "secdiv/mir.hpp"
#include "secdiv/secanalysis.hpp"

namespace secdiv {

enum class SecMode { None, Tsc, Psc };

std::string_view to_string(SecMode m);

enum class VarKind { Active, Cycle, Instr, Swap, Loc, Spilled, Cost };

struct Var {
  VarKind kind;
  std::uint32_t subject; // model op index, temp id, or block id
  int lo = 0;
  int hi = 0;
};

struct ModelOp {
  std::uint32_t id = 0; // operation id in the model function
  BlockId block = 0;
  Opcode opcode = Opcode::Nop;
  bool optional = false;
  bool terminator = false;
  std::vector<TempId> uses; // temp operands in operand order (may repeat)
  std::optional<TempId> def;
  std::optional<TempId> alias; // value the def stands for when the op is inactive
  std::optional<CellId> cell;
  int instr_alts = 1;
  bool swappable = false;
  unsigned base_latency = 1;
  int nop_rank = -1; // position among the block's optional NOPs
  std::vector<std::size_t> preds; // model ops of the same block that must come first
};

struct ModelTemp {
  TempId id = 0;
  bool input = false;
  int pinned = -1;
  std::optional<std::size_t> def_op; // model op index
};

struct ModelBlock {
  BlockId id = 0;
  std::vector<std::size_t> ops; // model op indices in IR order
  std::vector<std::size_t> nops; // optional NOPs in rank order
  std::int64_t weight = 1;        // scaled by CopProblem::weight_scale
  int horizon = 0;
};

struct BalancedPath {
  std::vector<BlockId> blocks;
  unsigned taken_edges = 0;
};

struct Constraint {
  std::string family;
  std::string text; // s-expression body
};

struct CopProblem {
  FunctionIR function; // the analyzed function plus synthetic optional NOPs
  MachineProfile profile;
  SecMode mode = SecMode::None;
  Rational gap{0};
  std::optional<Rational> best_cost;
  std::optional<std::int64_t> bound; // C_opt on the scaled objective
  bool allow_spill = true;
  std::int64_t weight_scale = 1;

  std::vector<ModelOp> ops;
  std::vector<ModelTemp> temps;
  std::vector<ModelBlock> blocks;
  std::vector<std::vector<BlockId>> cfg_paths; // all entry-to-exit paths
  std::vector<std::vector<BalancedPath>> balance_sets;
  LeakPairSets pairs;

  std::vector<Var> vars;
  std::vector<int> active_var, cycle_var, instr_var, swap_var; // by model op
  std::vector<int> loc_var, spilled_var;                         // by temp
  std::vector<int> cost_var;                                     // by block
  std::vector<Constraint> constraints;

  std::size_t op_index(std::uint32_t id) const;
  std::vector<int> decision_vars() const;
};

struct BuildOptions {
  unsigned nop_budget = 2;         // optional NOPs per block
  unsigned secret_nop_budget = 0;  // per block on secret paths; 0 derives it
  bool nop_per_op = false;         // one optional NOP per operation (naive layout)
};

class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Builds P_sec for a function that already went through analysis and
/// transformations. `best_cost` (unscaled objective) attaches C_opt.
CopProblem build_problem(const FunctionIR &f, const LeakPairSets &pairs,
                         const std::vector<SecretPathSet> &psets, const MachineProfile &p,
                         SecMode mode, Rational gap, std::optional<Rational> best_cost,
                         const BuildOptions &opts = {});

/// Same layout with a new C_opt bound.
CopProblem with_bound(const CopProblem &prob, Rational gap, std::optional<Rational> best_cost);

struct Solution {
  std::vector<int> values; // by var index
  Rational objective{0};
  std::int64_t scaled_objective = 0;
  std::uint64_t seed = 0;

  bool operator==(const Solution &) const = default;
};

/// Weighted block cost Σ weight(b)·cost(b) recomputed from the schedule.
Rational objective_value(const Solution &s, const CopProblem &prob);

/// Independent re-evaluation of every constraint; empty = feasible.
std::vector<std::string> check_solution(const Solution &s, const CopProblem &prob);

Assignment to_assignment(const Solution &s, const CopProblem &prob);
MachineProgram encode_solution(const Solution &s, const CopProblem &prob);

std::string emit_model(const CopProblem &prob);

enum class Balancing { Ebb, Cbb };

/// A function after the analysis and transformation stage of one mode.
struct Prepared {
  FunctionIR function;
  TypeEnv env;
  std::vector<SecretPathSet> psets;
  LeakPairSets pairs;
  std::vector<std::string> notes;
};

/// NONE keeps the function as is; TSC balances every secret if-then;
/// PSC restores masking operand order and generates leak pairs.
Prepared prepare(const FunctionIR &f, SecMode mode, Balancing balancing = Balancing::Ebb);

/// TSC when the function has secret branches, else PSC when it has random
/// inputs, else NONE.
SecMode auto_mode(const FunctionIR &f);

} // namespace secdiv

#endif
