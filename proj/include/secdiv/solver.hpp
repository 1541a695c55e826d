#ifndef SECDIV_SOLVER_HPP
#define SECDIV_SOLVER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "secdiv/copmodel.hpp"

namespace secdiv {

enum class SolveStatus { Optimal, Timeout, Unsat };

std::string_view to_string(SolveStatus s);

struct SolveResult {
  SolveStatus status = SolveStatus::Unsat;
  std::optional<Solution> solution; // best incumbent, also on timeout
  std::string unsat_family;          // constraint family blamed for UNSAT
  std::uint64_t nodes = 0;
};

/// Branch and bound. Search order: activation and spill flags, then issue
/// cycles block by block, then locations (smallest domain first), then
/// instruction alternatives and operand order.
SolveResult solve_optimal(const CopProblem &prob, double budget_secs = 600, std::uint64_t seed = 0);

/// Hamming distance over the active, cycle, location, instruction and swap
/// variables. Throws std::invalid_argument for solutions of different shapes.
int distance(const Solution &a, const Solution &b, const CopProblem &prob);

struct VariantPool {
  std::vector<Solution> variants;
  Rational gap{0};
  int dthresh = 1;
  std::string reason; // COMPLETE, EXHAUSTED or TIMEOUT
};

/// Variant 0 is `best`; every further variant re-solves from the root with
/// C_opt attached, a seeded value order, and distance >= dthresh to all
/// earlier variants.
VariantPool diversify(const CopProblem &prob, const Solution &best, int n, Rational gap,
                      int dthresh, double budget_secs, std::uint64_t seed);

struct NaivePool {
  VariantPool pool;
  CopProblem problem;       // security-unaware model the variants satisfy
  SecMode base_mode = SecMode::None;
  Prepared prepared;
};

/// Security-unaware randomizer: compiles a secure base and then renames
/// registers inside the base's register footprint and inserts random NOPs.
NaivePool naive_diversify(const FunctionIR &f, const MachineProfile &p, int n, std::uint64_t seed,
                          double budget_secs = 600);

} // namespace secdiv

#endif
