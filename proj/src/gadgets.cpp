#include "secdiv/gadgets.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace secdiv {

std::vector<Gadget> extract_gadgets(const MachineProgram &m, unsigned k) {
  std::vector<Instr> code;
  code.reserve(m.words.size());
  for (auto w : m.words)
    code.push_back(decode_word(w));
  std::set<std::pair<std::uint32_t, std::vector<std::uint32_t>>> seen;
  std::vector<Gadget> out;
  for (std::size_t end = 0; end < code.size(); ++end) {
    if (code[end].op != MOp::Ret)
      continue;
    for (unsigned len = 1; len <= k && len <= end + 1; ++len) {
      std::size_t first = end + 1 - len;
      if (len > 1 && is_control(code[first].op))
        break;
      Gadget g;
      g.start = static_cast<std::uint32_t>(first * 4);
      g.words.assign(m.words.begin() + first, m.words.begin() + end + 1);
      for (std::size_t i = first; i <= end; ++i)
        if (code[i].op != MOp::Nop)
          g.normalized.push_back(m.words[i]);
      if (seen.insert({g.start, g.normalized}).second)
        out.push_back(std::move(g));
    }
  }
  return out;
}

Rational srate(const std::vector<Gadget> &a, const std::vector<Gadget> &b) {
  if (a.empty())
    return Rational(0);
  std::set<std::pair<std::uint32_t, std::vector<std::uint32_t>>> in_b;
  for (const auto &g : b)
    in_b.insert({g.start, g.normalized});
  std::int64_t shared = 0;
  for (const auto &g : a)
    shared += in_b.count({g.start, g.normalized}) ? 1 : 0;
  return Rational(shared, static_cast<std::int64_t>(a.size()));
}

Rational srate(const MachineProgram &a, const MachineProgram &b, unsigned k) {
  return srate(extract_gadgets(a, k), extract_gadgets(b, k));
}

SrateHistogram pool_histogram(const std::vector<MachineProgram> &pool, unsigned k) {
  if (pool.size() < 2)
    throw std::invalid_argument("pool_histogram: need at least two programs");
  std::vector<std::vector<Gadget>> gad;
  for (const auto &m : pool)
    gad.push_back(extract_gadgets(m, k));
  SrateHistogram h;
  Rational sum(0);
  const Rational fifth(1, 5);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (i == j)
        continue;
      Rational s = srate(gad[i], gad[j]);
      sum += s;
      if (s == Rational(0))
        ++h.zero;
      else if (s <= fifth)
        ++h.low;
      else
        ++h.high;
    }
  h.mean = sum / static_cast<std::int64_t>(h.total());
  return h;
}

} // namespace secdiv
