#include "secdiv/verify.hpp"

#include <array>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace secdiv {

namespace {

std::string hex_bytes(const std::vector<std::uint8_t> &v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i)
      os << ',';
    static const char *digits = "0123456789abcdef";
    os << "0x" << digits[v[i] >> 4] << digits[v[i] & 15];
  }
  return os.str();
}

std::string path_text(const std::vector<BlockId> &p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += (i ? "-" : "") + std::to_string(p[i]);
  return s;
}

std::uint64_t ipow256(std::size_t k) {
  std::uint64_t n = 1;
  for (std::size_t i = 0; i < k; ++i)
    n *= 256;
  return n;
}

void fill(std::vector<std::uint8_t> &in, const std::vector<std::size_t> &slots, std::uint64_t x) {
  for (auto s : slots) {
    in[s] = static_cast<std::uint8_t>(x & 0xFF);
    x >>= 8;
  }
}

struct Classes {
  std::vector<std::size_t> pub, sec, rnd;
};

Classes classify(const MachineProgram &m) {
  Classes c;
  for (std::size_t i = 0; i < m.inputs.size(); ++i) {
    switch (m.inputs[i].label) {
    case Label::Public:
      c.pub.push_back(i);
      break;
    case Label::Secret:
      c.sec.push_back(i);
      break;
    case Label::Random:
      c.rnd.push_back(i);
      break;
    }
  }
  return c;
}

/// Every combination of probe values over the public inputs.
std::vector<std::vector<std::uint8_t>> probe_grid(std::size_t npub,
                                                  const std::vector<std::uint8_t> &probes) {
  std::vector<std::vector<std::uint8_t>> out{{}};
  for (std::size_t i = 0; i < npub; ++i) {
    std::vector<std::vector<std::uint8_t>> next;
    for (const auto &prefix : out)
      for (auto v : probes) {
        auto p = prefix;
        p.push_back(v);
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

} // namespace

EquivalenceReport check_equivalence(const MachineProgram &a, const MachineProgram &b,
                                    std::uint64_t seed, unsigned samples) {
  if (a.inputs.size() != b.inputs.size())
    throw std::invalid_argument("check_equivalence: programs have different signatures");
  const auto &pa = profile_by_name(a.profile);
  const auto &pb = profile_by_name(b.profile);
  Decoded da = decode_program(a), db = decode_program(b);
  EquivalenceReport r;
  const std::size_t n = a.inputs.size();
  std::vector<std::uint8_t> in(n, 0);
  auto compare = [&]() {
    ++r.tested;
    auto x = run_fast(da, pa, in);
    auto y = run_fast(db, pb, in);
    if (x.result != y.result) {
      r.mismatch = in;
      r.result_a = x.result;
      r.result_b = y.result;
      return false;
    }
    return true;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i)
    all[i] = i;
  if (n <= 2) {
    r.exhaustive = true;
    for (std::uint64_t x = 0; x < ipow256(n); ++x) {
      fill(in, all, x);
      if (!compare())
        return r;
    }
    return r;
  }
  std::mt19937_64 g(seed);
  for (unsigned k = 0; k < samples; ++k) {
    for (auto &v : in)
      v = static_cast<std::uint8_t>(g() & 0xFF);
    if (!compare())
      return r;
  }
  return r;
}

std::uint64_t path_cycles(const MachineProgram &m, const std::vector<BlockId> &path) {
  const auto &p = profile_by_name(m.profile);
  Decoded d = decode_program(m);
  std::uint64_t c = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    c += block_cost(d, path[i], p);
    if (i + 1 == path.size())
      break;
    BlockId next = path[i + 1];
    if (next == path[i] + 1 || m.block_size(path[i]) == 0)
      continue;
    const Instr &last = d.code[m.block_offsets[path[i]] + m.block_size(path[i]) - 1];
    if ((last.op == MOp::Beq || last.op == MOp::Bne) && last.c == m.block_offsets[next])
      c += p.taken_branch_overhead;
  }
  return c;
}

bool CrReport::secure() const {
  for (const auto &s : sets)
    if (!s.balanced)
      return false;
  for (const auto &p : probes)
    if (p.bcet != p.wcet)
      return false;
  return true;
}

std::vector<std::string> CrReport::records() const {
  std::vector<std::string> out;
  for (const auto &s : sets) {
    std::string costs;
    for (const auto &p : s.paths)
      costs += (costs.empty() ? "" : ";") + path_text(p.path) + "=" + std::to_string(p.cycles);
    out.push_back(std::string(s.balanced ? "BALANCED" : "UNBALANCED") + "\tbranch:" +
                  std::to_string(s.branch_block) + "\t" + costs);
  }
  for (const auto &p : probes) {
    std::string w = "bcet=" + std::to_string(p.bcet) + ";wcet=" + std::to_string(p.wcet);
    if (p.bcet != p.wcet)
      w += ";fast=" + hex_bytes(*p.bcet_input) + ";slow=" + hex_bytes(*p.wcet_input);
    out.push_back(std::string(p.bcet == p.wcet ? "CONSTANT" : "VARIABLE") + "\tpublics:" +
                  hex_bytes(p.publics) + "\t" + w);
  }
  if (!complete)
    out.push_back("INCOMPLETE\t-\tsecret space sampled");
  return out;
}

CrReport check_cr(const MachineProgram &m, const std::vector<SecretPathSet> &psets,
                  const std::vector<std::uint8_t> &probes) {
  const auto &prof = profile_by_name(m.profile);
  CrReport r;
  for (const auto &s : psets) {
    CrSetReport sr;
    sr.branch_block = s.branch_block;
    for (const auto &path : s.paths)
      sr.paths.push_back({path, path_cycles(m, path)});
    for (const auto &pc : sr.paths)
      sr.balanced = sr.balanced && pc.cycles == sr.paths.front().cycles;
    r.sets.push_back(std::move(sr));
  }
  Classes c = classify(m);
  // timing may follow randoms freely; only the spread over secrets counts
  constexpr std::uint64_t kLimit = 1ull << 24;
  const bool exhaustive = c.sec.size() + c.rnd.size() <= 3;
  const std::uint64_t groups = exhaustive ? ipow256(c.rnd.size()) : 256;
  const std::uint64_t per_group = exhaustive ? ipow256(c.sec.size()) : kLimit / groups;
  r.complete = exhaustive;
  Decoded d = decode_program(m);
  std::mt19937_64 g(0);
  for (const auto &pubs : probe_grid(c.pub.size(), probes)) {
    CrProbe pr;
    pr.publics = pubs;
    std::vector<std::uint8_t> in(m.inputs.size(), 0);
    for (std::size_t i = 0; i < c.pub.size(); ++i)
      in[c.pub[i]] = pubs[i];
    bool first = true;
    for (std::uint64_t y = 0; y < groups; ++y) {
      fill(in, c.rnd, exhaustive ? y : g());
      CrProbe grp;
      grp.bcet = std::numeric_limits<std::uint64_t>::max();
      for (std::uint64_t x = 0; x < per_group; ++x) {
        fill(in, c.sec, exhaustive ? x : g());
        auto res = run_fast(d, prof, in);
        if (res.cycles < grp.bcet) {
          grp.bcet = res.cycles;
          grp.bcet_input = in;
        }
        if (!grp.wcet_input || res.cycles > grp.wcet) {
          grp.wcet = res.cycles;
          grp.wcet_input = in;
        }
      }
      if (first || grp.wcet - grp.bcet > pr.wcet - pr.bcet) {
        pr.bcet = grp.bcet;
        pr.wcet = grp.wcet;
        pr.bcet_input = grp.bcet_input;
        pr.wcet_input = grp.wcet_input;
        first = false;
      }
    }
    r.probes.push_back(std::move(pr));
  }
  return r;
}

std::string PscSite::name() const {
  std::string s = to_string(site);
  if (occurrence)
    s += "#" + std::to_string(occurrence);
  return s;
}

bool PscReport::secure() const {
  if (!complete)
    return false;
  for (const auto &s : sites)
    if (s.leak)
      return false;
  return true;
}

std::vector<std::string> PscReport::records() const {
  std::vector<std::string> out;
  for (const auto &s : sites)
    out.push_back(std::string(s.leak ? "LEAK" : "INDEPENDENT") + "\t" + s.name() + "\t" +
                  (s.witness.empty() ? "-" : s.witness));
  if (!complete)
    out.push_back("INCOMPLETE\t-\tmore than 3 secret and random inputs");
  return out;
}

const PscSite *PscReport::find(const std::string &name) const {
  for (const auto &s : sites)
    if (s.name() == name)
      return &s;
  return nullptr;
}

PscReport check_psc(const MachineProgram &m, const std::vector<std::uint8_t> &probes) {
  PscReport r;
  Classes c = classify(m);
  if (c.sec.size() + c.rnd.size() > 3) {
    r.complete = false;
    return r;
  }
  const auto &prof = profile_by_name(m.profile);
  Decoded d = decode_program(m);
  using Key = std::pair<LeakSite, unsigned>;
  using Hist = std::array<std::uint32_t, 256>; // executed values; the rest did not run
  std::map<Key, PscSite> verdicts;
  const std::uint64_t nsec = ipow256(c.sec.size()), nrnd = ipow256(c.rnd.size());

  for (const auto &pubs : probe_grid(c.pub.size(), probes)) {
    std::vector<std::uint8_t> in(m.inputs.size(), 0);
    for (std::size_t i = 0; i < c.pub.size(); ++i)
      in[c.pub[i]] = pubs[i];
    std::map<Key, Hist> reference;
    std::vector<std::uint8_t> ref_secret;
    for (std::uint64_t s = 0; s < nsec; ++s) {
      fill(in, c.sec, s);
      std::map<Key, Hist> hist;
      for (std::uint64_t x = 0; x < nrnd; ++x) {
        fill(in, c.rnd, x);
        MachineState st = initial_state(m, in);
        std::uint32_t last_addr = std::numeric_limits<std::uint32_t>::max();
        unsigned occ = 0;
        execute(
            d, prof, st,
            [&](const Event &e) {
              LeakSite site{e.address, e.kind, e.index};
              if (e.kind == EventKind::BusUpdate) {
                occ = e.address == last_addr ? occ + 1 : 0;
                last_addr = e.address;
              }
              unsigned o = e.kind == EventKind::BusUpdate ? occ : 0;
              ++hist[{site, o}][e.old_value ^ e.new_value];
            },
            [](std::uint32_t, std::uint64_t) {});
      }
      std::vector<std::uint8_t> secret;
      for (auto i : c.sec)
        secret.push_back(in[i]);
      if (s == 0) {
        reference = std::move(hist);
        ref_secret = secret;
        for (const auto &[k, h] : reference)
          verdicts.try_emplace(k, PscSite{k.first, k.second, false, {}});
        continue;
      }
      static const Hist kNone{};
      for (const auto &[k, h] : hist)
        verdicts.try_emplace(k, PscSite{k.first, k.second, false, {}});
      for (auto &[k, v] : verdicts) {
        if (v.leak)
          continue;
        auto a = reference.find(k);
        auto b = hist.find(k);
        const Hist &ha = a == reference.end() ? kNone : a->second;
        const Hist &hb = b == hist.end() ? kNone : b->second;
        if (ha != hb) {
          v.leak = true;
          v.witness = "publics=" + (pubs.empty() ? std::string("-") : hex_bytes(pubs)) +
                      ";secrets=" + hex_bytes(ref_secret) + "|" + hex_bytes(secret);
        }
      }
    }
  }
  for (auto &[k, v] : verdicts)
    r.sites.push_back(std::move(v));
  return r;
}

} // namespace secdiv
