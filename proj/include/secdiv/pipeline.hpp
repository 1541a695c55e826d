#ifndef SECDIV_PIPELINE_HPP
#define SECDIV_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "secdiv/gadgets.hpp"
#include "secdiv/solver.hpp"
#include "secdiv/verify.hpp"

namespace secdiv {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1, // parse, validation or missing files
  kExitUsage = 2,
  kExitUnsat = 3,
  kExitTimeout = 4,
  kExitOracle = 5,
};

FunctionIR read_function(const std::filesystem::path &file);

std::optional<SecMode> parse_mode(std::string_view s); // tsc, psc, none

struct CompileRun {
  SecMode mode = SecMode::None;
  Prepared prepared;
  CopProblem problem;
  SolveResult result;
  std::optional<MachineProgram> program;
  SolveResult baseline; // mode NONE on the source function
  std::optional<CrReport> cr;
  std::optional<PscReport> psc;

  int exit_code() const;
};

CompileRun run_compile(const FunctionIR &f, const MachineProfile &p, SecMode mode,
                       Balancing balancing = Balancing::Ebb, double budget_secs = 600,
                       std::uint64_t seed = 0);

/// Deterministic summary; the overhead is relative to the mode-NONE optimum.
std::string compile_text(const FunctionIR &f, const CompileRun &run);

struct PoolConfig {
  std::string mode = "auto"; // tsc, psc, none, naive or auto
  std::string profile = "tight8";
  Balancing balancing = Balancing::Ebb;
  Rational gap{0};
  int variants = 20;
  int dthresh = 1;
  std::uint64_t seed = 0;
  double budget_secs = 600;
};

struct PoolRun {
  PoolConfig config;
  std::string function_name;
  std::string mode; // resolved mode name, "naive" kept as is
  SecMode checks = SecMode::None; // oracle the variants must pass
  Prepared prepared;
  CopProblem problem;
  VariantPool pool;
  std::vector<MachineProgram> programs;
  SolveStatus best_status = SolveStatus::Optimal;
  std::string unsat_family;
  double solve_secs = 0, diversify_secs = 0;

  int exit_code() const;
};

PoolRun run_pool(const FunctionIR &f, const PoolConfig &cfg);

std::string manifest_text(const PoolRun &run);
std::string timing_text(const PoolRun &run);

/// function.mir, variant_NNN.bin, manifest.txt and timing.txt.
void write_pool(const std::filesystem::path &dir, const PoolRun &run);

struct PoolOnDisk {
  std::filesystem::path dir;
  std::map<std::string, std::string> fields; // manifest header
  FunctionIR function;
  std::vector<std::string> files;
  std::vector<MachineProgram> programs;
  std::optional<double> total_secs; // from timing.txt when present

  SecMode checks() const;
};

/// Throws std::runtime_error naming the missing or malformed file.
PoolOnDisk read_pool(const std::filesystem::path &dir);

struct VariantVerdict {
  std::string file;
  EquivalenceReport equivalence;
  std::optional<CrReport> cr;
  std::optional<PscReport> psc;

  bool pass() const;
  bool incomplete() const;
};

std::vector<VariantVerdict> verify_pool(const PoolOnDisk &pool);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(bool csv) const;
};

Table gadget_table(const std::vector<PoolOnDisk> &pools);

/// Every pool (manifest.txt) and compile output (compile.txt) directly below
/// `dir`, rendered as overhead, pool, gadget and breakage tables.
std::string report_text(const std::filesystem::path &dir, bool csv, bool timing);

std::string percent(const Rational &r); // two decimals

} // namespace secdiv

#endif
