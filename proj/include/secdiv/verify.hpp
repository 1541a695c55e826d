#ifndef SECDIV_VERIFY_HPP
#define SECDIV_VERIFY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "secdiv/machine.hpp"
#include "secdiv/secanalysis.hpp"

namespace secdiv {

inline const std::vector<std::uint8_t> kPublicProbes = {0x00, 0xFF, 0x5A};

struct EquivalenceReport {
  std::uint64_t tested = 0;
  bool exhaustive = false;
  std::optional<std::vector<std::uint8_t>> mismatch; // input values in declaration order
  std::uint8_t result_a = 0, result_b = 0;

  bool ok() const { return !mismatch; }
};

/// Exhaustive over 8-bit inputs for at most two inputs, else `samples`
/// seeded random inputs. Compares return values only.
EquivalenceReport check_equivalence(const MachineProgram &a, const MachineProgram &b,
                                    std::uint64_t seed = 0, unsigned samples = 1000);

struct CrPathCost {
  std::vector<BlockId> path;
  std::uint64_t cycles = 0;
};

struct CrSetReport {
  BlockId branch_block = 0;
  std::vector<CrPathCost> paths;
  bool balanced = true;
};

struct CrProbe {
  std::vector<std::uint8_t> publics;
  std::uint64_t bcet = 0, wcet = 0;
  std::optional<std::vector<std::uint8_t>> bcet_input, wcet_input;
};

struct CrReport {
  std::vector<CrSetReport> sets;
  std::vector<CrProbe> probes;
  bool complete = true;

  bool secure() const;
  std::vector<std::string> records() const;
};

/// Static path costs for every secret path set plus BCET/WCET per public
/// probe. BCET/WCET range over secrets with the randoms held fixed; the probe
/// keeps the random assignment with the widest spread. Exhaustive up to three
/// secret and random inputs, sampled beyond (which clears `complete`).
CrReport check_cr(const MachineProgram &m, const std::vector<SecretPathSet> &psets,
                  const std::vector<std::uint8_t> &probes = kPublicProbes);

/// Cycle cost of one block path, counting taken conditional edges.
std::uint64_t path_cycles(const MachineProgram &m, const std::vector<BlockId> &path);

struct PscSite {
  LeakSite site;
  unsigned occurrence = 0; // several bus updates can share one instruction
  bool leak = false;
  std::string witness; // "publics=..;secrets=a|b"

  std::string name() const;
};

struct PscReport {
  std::vector<PscSite> sites;
  bool complete = true;

  bool secure() const;
  std::vector<std::string> records() const;
  const PscSite *find(const std::string &name) const;
};

/// Per leak point, compares the exact distribution of old^new (with "not
/// executed" as its own value) across all secret values, randoms uniform and
/// publics fixed at each probe. More than three secret and random inputs
/// together yields an incomplete report.
PscReport check_psc(const MachineProgram &m,
                    const std::vector<std::uint8_t> &probes = kPublicProbes);

} // namespace secdiv

#endif
