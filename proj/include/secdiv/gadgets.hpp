#ifndef SECDIV_GADGETS_HPP
#define SECDIV_GADGETS_HPP

#include <cstdint>
#include <vector>

#include "secdiv/machine.hpp"
#include "secdiv/mir.hpp"

namespace secdiv {

constexpr unsigned kGadgetLength = 5;

struct Gadget {
  std::uint32_t start = 0; // byte address
  std::vector<std::uint32_t> words;
  std::vector<std::uint32_t> normalized; // NOPs removed

  auto operator<=>(const Gadget &) const = default;
};

/// Suffixes of 1..k words ending at each RET. A suffix never extends over an
/// earlier control transfer.
std::vector<Gadget> extract_gadgets(const MachineProgram &m, unsigned k = kGadgetLength);

/// Fraction of the gadgets of `a` found with the same normalized form at the
/// same address in `b`; 0 when `a` has no gadgets.
Rational srate(const MachineProgram &a, const MachineProgram &b, unsigned k = kGadgetLength);
Rational srate(const std::vector<Gadget> &a, const std::vector<Gadget> &b);

struct SrateHistogram {
  std::uint64_t zero = 0; // srate = 0
  std::uint64_t low = 0;  // (0, 0.2]
  std::uint64_t high = 0; // (0.2, 1]
  Rational mean{0};

  std::uint64_t total() const { return zero + low + high; }
};

/// Over all ordered pairs of distinct pool members. Throws
/// std::invalid_argument for fewer than two programs.
SrateHistogram pool_histogram(const std::vector<MachineProgram> &pool, unsigned k = kGadgetLength);

} // namespace secdiv

#endif
