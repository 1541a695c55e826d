#ifndef SECDIV_SECANALYSIS_HPP
#define SECDIV_SECANALYSIS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "secdiv/mir.hpp"

namespace secdiv {

struct InferredType {
  Label label = Label::Public;
  std::set<std::string> dominant_randoms;
  std::set<std::string> secret_support;
  std::set<std::string> random_support;

  bool operator==(const InferredType &) const = default;
};

/// A value as an XOR of atoms plus a constant. Atoms are inputs or results of
/// non-linear operations; XOR-ing two forms cancels shared atoms.
struct XorForm {
  std::set<std::uint32_t> atoms;
  std::uint8_t constant = 0;

  bool operator==(const XorForm &) const = default;
  auto operator<=>(const XorForm &) const = default;
};

XorForm xor_forms(const XorForm &a, const XorForm &b);

struct Atom {
  std::string name;
  std::set<std::string> secret_support;
  std::set<std::string> random_support;
  std::set<std::string> dominant;
};

/// Type environment of a function: forms of every temp, memory operation
/// value, and branch condition, over a shared atom table.
struct TypeEnv {
  std::vector<Atom> atoms;
  std::vector<XorForm> temp_forms;           // by TempId
  std::map<std::uint32_t, XorForm> mem_forms; // by LD/ST operation id
  std::map<BlockId, InferredType> conditions; // by block with a conditional branch
  std::vector<InferredType> types;           // by TempId

  InferredType type_of(const XorForm &f) const;
  bool secret_dependent(const XorForm &f) const { return type_of(f).label == Label::Secret; }
};

TypeEnv infer_types(const FunctionIR &f);

struct SecretPathSet {
  BlockId branch_block = 0;
  std::vector<std::vector<BlockId>> paths;

  bool operator==(const SecretPathSet &) const = default;
};

class PathError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Paths from block n to a common sink (or to exits), following the
/// block-order priority search. Throws PathError on a cycle.
std::vector<std::vector<BlockId>> get_paths(BlockId n, const BlockGraph &g);

std::vector<SecretPathSet> extract_secret_path_sets(const FunctionIR &f, const TypeEnv &env);

struct TransformResult {
  FunctionIR function;
  bool changed = false;
  std::vector<std::string> warnings;
};

class TransformError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inserts a block of optional NOPs on the short edge of an if-then shape.
TransformResult balance_ebb(const FunctionIR &f, const SecretPathSet &s);
/// Inserts a block holding dead copies of the single-block arm.
TransformResult balance_cbb(const FunctionIR &f, const SecretPathSet &s);

/// Largest number of NOPs the balancing block can need: the costliest arm
/// under worst-case spilling, plus branch overhead slack.
unsigned ebb_nop_bound(const FunctionIR &f, const SecretPathSet &s);

struct MaskOrderResult {
  FunctionIR function;
  unsigned rewrites = 0;
  std::vector<TempId> residual; // XOR results still typed SECRET
};

MaskOrderResult restore_mask_order(const FunctionIR &f);

constexpr std::uint32_t kInitialContent = 0xFFFFFFFEu; // zero register or bus at entry

struct LeakPairSets {
  std::set<std::pair<std::uint32_t, std::uint32_t>> rpairs; // temp ids, first < second
  std::set<std::pair<std::uint32_t, std::uint32_t>> mpairs; // LD/ST op ids, first < second

  bool has_rpair(std::uint32_t a, std::uint32_t b) const {
    return rpairs.count({std::min(a, b), std::max(a, b)}) > 0;
  }
  bool has_mpair(std::uint32_t a, std::uint32_t b) const {
    return mpairs.count({std::min(a, b), std::max(a, b)}) > 0;
  }
};

LeakPairSets gen_leak_pairs(const FunctionIR &f, const TypeEnv &env);

std::string analysis_report(const FunctionIR &f, const TypeEnv &env,
                            const std::vector<SecretPathSet> &psets, const LeakPairSets &pairs);

} // namespace secdiv

#endif
