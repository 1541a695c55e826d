#include <doctest.h>

#include <random>

#include "secdiv/solver.hpp"
#include "secdiv/verify.hpp"
#include "support.hpp"

using namespace secdiv;
using testing::load;

namespace {

MachineProgram program(std::vector<Label> labels, std::vector<Instr> code) {
  MachineProgram m;
  m.profile = "tight8";
  m.function = "hand";
  for (std::size_t i = 0; i < labels.size(); ++i)
    m.inputs.push_back({false, static_cast<std::uint8_t>(i), labels[i]});
  m.block_offsets = {0};
  for (const auto &i : code)
    m.words.push_back(encode_word(i));
  return m;
}

Instr xor3(int d, int a, int b) {
  return {MOp::Xor, false, static_cast<std::uint8_t>(d), static_cast<std::uint8_t>(a),
          static_cast<std::uint8_t>(b)};
}

const std::vector<Label> kXor = {Label::Public, Label::Secret, Label::Random};

MachineProgram secure_xor() { return program(kXor, {xor3(1, 1, 2), xor3(0, 0, 1), {MOp::Ret}}); }
MachineProgram leaky_xor() { return program(kXor, {xor3(2, 1, 2), xor3(0, 0, 2), {MOp::Ret}}); }

struct Compiled {
  Prepared prep;
  CopProblem prob;
  Solution best;
  MachineProgram program;
};

Compiled compile(const FunctionIR &f, SecMode mode) {
  Compiled c;
  c.prep = prepare(f, mode);
  c.prob = build_problem(c.prep.function, c.prep.pairs, c.prep.psets, tight8(), mode, Rational(0),
                         std::nullopt);
  auto r = solve_optimal(c.prob, 60);
  REQUIRE(r.solution);
  c.best = *r.solution;
  c.program = encode_solution(c.best, c.prob);
  return c;
}

} // namespace

TEST_CASE("equivalence of a program with itself and across a pool") {
  auto c = compile(load("bench/masked_xor.mir"), SecMode::Psc);
  auto self = check_equivalence(c.program, c.program);
  CHECK(self.ok());
  CHECK_FALSE(self.exhaustive);
  CHECK(self.tested == 1000);
  auto pool = diversify(c.prob, c.best, 10, Rational(1, 10), 1, 60, 0);
  for (const auto &v : pool.variants)
    CHECK(check_equivalence(c.program, encode_solution(v, c.prob)).ok());
  auto two = compile(load("bench/check_bit.mir"), SecMode::Tsc);
  auto r = check_equivalence(two.program, two.program);
  CHECK(r.exhaustive);
  CHECK(r.tested == 65536);
}

TEST_CASE("mutate and detect") {
  std::mt19937_64 g(2);
  int mutants = 0, detected = 0;
  for (const auto &name : testing::bench_names()) {
    auto f = load("bench/" + name + ".mir");
    auto c = compile(f, auto_mode(f));
    for (std::size_t w = 0; w < c.program.words.size(); ++w) {
      Instr in = decode_word(c.program.words[w]);
      if (in.op < MOp::Add || in.op > MOp::Or)
        continue;
      for (MOp repl : {MOp::Add, MOp::Sub, MOp::Xor, MOp::And, MOp::Or}) {
        if (repl == in.op)
          continue;
        auto mutant = c.program;
        Instr m = in;
        m.op = repl;
        mutant.words[w] = encode_word(m);
        // a mutant only counts when some input tells it apart
        bool differs = false;
        auto dm = decode_program(mutant), dc = decode_program(c.program);
        for (int k = 0; k < 4000 && !differs; ++k) {
          std::vector<std::uint8_t> x;
          for (std::size_t i = 0; i < c.program.inputs.size(); ++i)
            x.push_back(static_cast<std::uint8_t>(g()));
          differs = run_fast(dm, tight8(), x).result != run_fast(dc, tight8(), x).result;
        }
        if (!differs)
          continue;
        ++mutants;
        auto rep = check_equivalence(c.program, mutant, 5);
        if (!rep.ok()) {
          ++detected;
          auto a = run_fast(dc, tight8(), *rep.mismatch).result;
          auto b = run_fast(dm, tight8(), *rep.mismatch).result;
          CHECK(a != b);
          CHECK(rep.result_a == a);
          CHECK(rep.result_b == b);
        }
      }
    }
  }
  CHECK(mutants > 20);
  CHECK(detected == mutants);
}

TEST_CASE("check_cr on balanced, unbalanced and straight-line programs") {
  auto f = load("bench/check_bit.mir");
  auto tsc = compile(f, SecMode::Tsc);
  auto cr = check_cr(tsc.program, tsc.prep.psets);
  CHECK(cr.secure());
  CHECK(cr.complete);
  CHECK(cr.probes.size() == 3);
  for (const auto &p : cr.probes)
    CHECK(p.bcet == p.wcet);

  auto none = compile(f, SecMode::None);
  auto psets = extract_secret_path_sets(f, infer_types(f));
  auto bad = check_cr(none.program, psets);
  CHECK_FALSE(bad.secure());
  REQUIRE(bad.sets.size() == 1);
  CHECK_FALSE(bad.sets[0].balanced);
  CHECK(bad.sets[0].paths[0].cycles != bad.sets[0].paths[1].cycles);
  bool variable = false;
  for (const auto &p : bad.probes)
    variable = variable || p.bcet != p.wcet;
  CHECK(variable);
  auto recs = bad.records();
  CHECK(recs[0].rfind("UNBALANCED\tbranch:0\t", 0) == 0);

  CHECK(check_cr(secure_xor(), {}).secure());
}

TEST_CASE("path cycles agree with simulated runs") {
  auto tsc = compile(load("bench/check_bit.mir"), SecMode::Tsc);
  const auto &paths = tsc.prep.psets[0].paths;
  REQUIRE(paths.size() == 2);
  CHECK(path_cycles(tsc.program, paths[0]) == path_cycles(tsc.program, paths[1]));
  for (std::uint8_t key : {std::uint8_t{7}, std::uint8_t{8}}) {
    std::vector<std::uint8_t> in{7, key};
    auto t = run(tsc.program, in, tight8());
    CHECK(path_cycles(tsc.program, t.blocks) == t.cycles);
  }
  auto none = compile(load("bench/check_bit.mir"), SecMode::None);
  std::vector<std::uint8_t> eq{1, 1}, ne{1, 2};
  auto te = run(none.program, eq, tight8()), tn = run(none.program, ne, tight8());
  CHECK(path_cycles(none.program, te.blocks) == te.cycles);
  CHECK(path_cycles(none.program, tn.blocks) == tn.cycles);
  CHECK(te.cycles != tn.cycles);
}

TEST_CASE("check_psc on the two xor programs") {
  auto good = check_psc(secure_xor());
  CHECK(good.secure());
  CHECK(good.sites.size() == 2);
  auto bad = check_psc(leaky_xor());
  CHECK_FALSE(bad.secure());
  const PscSite *r2 = bad.find("0x0:r2");
  REQUIRE(r2);
  CHECK(r2->leak);
  CHECK_FALSE(r2->witness.empty());
  const PscSite *r0 = bad.find("0x4:r0");
  REQUIRE(r0);
  CHECK_FALSE(r0->leak);
  auto recs = bad.records();
  CHECK(std::find(recs.begin(), recs.end(), "LEAK\t0x0:r2\t" + r2->witness) != recs.end());
}

TEST_CASE("check_psc on public and oversized programs") {
  auto pub = compile(load("fixtures/all_public.mir"), SecMode::None);
  CHECK(check_psc(pub.program).secure());
  auto big = program({Label::Secret, Label::Secret, Label::Random, Label::Random},
                     {xor3(0, 0, 1), {MOp::Ret}});
  auto r = check_psc(big);
  CHECK_FALSE(r.complete);
  CHECK_FALSE(r.secure());
  CHECK(r.records().back().rfind("INCOMPLETE", 0) == 0);
}

TEST_CASE("check_psc sees bus transitions of spilled values") {
  // masked key then mask cross the bus back to back
  auto m = program(kXor, {xor3(1, 1, 2),
                          {MOp::Mov, false, kSlotFlag | 0, 1, 0},
                          {MOp::Mov, false, kSlotFlag | 1, 2, 0},
                          {MOp::Ret, false, 0, 0, 0}});
  auto r = check_psc(m);
  CHECK_FALSE(r.secure());
  CHECK_FALSE(r.find("0x4:bus")->leak);
  const PscSite *s = r.find("0x8:bus");
  REQUIRE(s);
  CHECK(s->leak);
}

TEST_CASE("typed random values written over public registers do not leak") {
  auto c = compile(load("bench/masked_xor.mir"), SecMode::Psc);
  auto rep = check_psc(c.program);
  CHECK(rep.secure());
  for (const auto &s : rep.sites)
    CHECK_FALSE(s.leak);
}

TEST_CASE("property: solver variants satisfy the oracle of their mode") {
  std::mt19937_64 g(41);
  int tsc = 0, psc = 0;
  for (int i = 0; i < 120; ++i) {
    auto f = parse_function(testing::random_function(g, true));
    // three hidden inputs already cost 2^24 runs per probe
    if (std::count_if(f.inputs.begin(), f.inputs.end(),
                      [](const auto &in) { return in.label != Label::Public; }) > 2)
      continue;
    for (SecMode mode : {SecMode::Tsc, SecMode::Psc}) {
      auto prep = prepare(f, mode);
      auto prob = build_problem(prep.function, prep.pairs, prep.psets, tight8(), mode,
                                Rational(0), std::nullopt);
      auto r = solve_optimal(prob, 1);
      if (!r.solution)
        continue;
      auto pool = diversify(prob, *r.solution, 3, Rational(1, 10), 1, 0.5, i);
      for (const auto &v : pool.variants) {
        auto m = encode_solution(v, prob);
        CAPTURE(serialize_function(prep.function));
        if (mode == SecMode::Tsc) {
          CHECK(check_cr(m, prep.psets).secure());
          ++tsc;
        } else {
          auto rep = check_psc(m);
          if (rep.complete) {
            CHECK(rep.secure());
            ++psc;
          }
        }
      }
    }
  }
  CHECK(tsc > 40);
  CHECK(psc > 20);
}
