#include <doctest.h>

#include <random>

#include "secdiv/copmodel.hpp"
#include "secdiv/solver.hpp"
#include "support.hpp"

using namespace secdiv;
using testing::load;

namespace {

CopProblem problem_for(const FunctionIR &f, SecMode mode, const MachineProfile &p = tight8()) {
  auto prep = prepare(f, mode);
  return build_problem(prep.function, prep.pairs, prep.psets, p, mode, Rational(0), std::nullopt);
}

Solution best(const CopProblem &prob) {
  auto r = solve_optimal(prob, 60);
  REQUIRE(r.status == SolveStatus::Optimal);
  return *r.solution;
}

bool has_error(const std::vector<std::string> &errors, const std::string &prefix) {
  return std::any_of(errors.begin(), errors.end(),
                     [&](const std::string &e) { return e.rfind(prefix, 0) == 0; });
}

std::set<std::string> families(const CopProblem &prob) {
  std::set<std::string> out;
  for (const auto &c : prob.constraints)
    out.insert(c.family);
  return out;
}

} // namespace

TEST_CASE("mode none has only base constraint families") {
  for (const auto &n : testing::bench_names()) {
    auto prob = problem_for(load("bench/" + n + ".mir"), SecMode::None);
    auto fam = families(prob);
    CHECK(fam.count("balance") == 0);
    CHECK(fam.count("rot-conflict") == 0);
    CHECK(fam.count("mre-conflict") == 0);
    CHECK(fam.count("optimality-gap") == 0);
    CHECK(fam.count("interference") == 1);
    CHECK(prob.balance_sets.empty());
  }
}

TEST_CASE("check_bit in TSC mode balances both paths") {
  auto prob = problem_for(load("bench/check_bit.mir"), SecMode::Tsc);
  CHECK(families(prob).count("balance") == 1);
  REQUIRE(prob.balance_sets.size() == 1);
  auto s = best(prob);
  CHECK(check_solution(s, prob).empty());
  std::set<std::int64_t> sums;
  for (const auto &p : prob.balance_sets[0]) {
    std::int64_t c = p.taken_edges * prob.profile.taken_branch_overhead;
    for (auto b : p.blocks)
      c += s.values[prob.cost_var[b]];
    sums.insert(c);
  }
  CHECK(sums.size() == 1);
}

TEST_CASE("masked xor in PSC mode never follows mask with mk in one register") {
  auto f = load("bench/masked_xor.mir");
  auto prob = problem_for(f, SecMode::Psc);
  CHECK(families(prob).count("rot-conflict") == 1);
  auto s = best(prob);
  CHECK(check_solution(s, prob).empty());
  TempId mask = *prob.function.find_temp("mask"), mk = *prob.function.find_temp("mk");
  CHECK(s.values[prob.loc_var[mk]] != s.values[prob.loc_var[mask]]);
}

TEST_CASE("the insecure xor assignment violates rot-conflict and only that") {
  auto f = load("bench/masked_xor.mir");
  auto prob = problem_for(f, SecMode::Psc);
  auto s = best(prob);
  TempId mask = *prob.function.find_temp("mask"), mk = *prob.function.find_temp("mk");
  TempId t = *prob.function.find_temp("t");
  s.values[prob.loc_var[mk]] = 2;
  s.values[prob.loc_var[t]] = 0;
  REQUIRE(s.values[prob.loc_var[mask]] == 2);
  auto errors = check_solution(s, prob);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0] == "rot-conflict: mk overwrites mask in r2");
  auto none = problem_for(f, SecMode::None);
  Solution n = best(none);
  n.values[none.loc_var[*none.function.find_temp("mk")]] = 2;
  n.values[none.loc_var[*none.function.find_temp("t")]] = 0;
  CHECK(check_solution(n, none).empty());
}

TEST_CASE("check_solution names a violated dependency") {
  auto f = load("fixtures/all_public.mir");
  auto prob = problem_for(f, SecMode::None);
  auto s = best(prob);
  // swap the issue cycles of c = add and d = xor c
  std::size_t ic = 0, id = 1;
  std::swap(s.values[prob.cycle_var[ic]], s.values[prob.cycle_var[id]]);
  auto errors = check_solution(s, prob);
  CHECK(has_error(errors, "dependency: o0 -> o1"));
}

TEST_CASE("check_solution flags copy semantics, interference and pinning") {
  auto f = load("fixtures/copies.mir");
  auto prob = problem_for(f, SecMode::None);
  auto s = best(prob);
  std::size_t copy = 1;
  REQUIRE(prob.ops[copy].opcode == Opcode::Copy);
  REQUIRE(s.values[prob.active_var[copy]] == 0);
  TempId c2 = *prob.ops[copy].def;
  auto bad = s;
  bad.values[prob.loc_var[c2]] = (s.values[prob.loc_var[c2]] + 1) % 8;
  CHECK(has_error(check_solution(bad, prob), "copy-semantics"));
  bad = s;
  bad.values[prob.loc_var[*prob.function.find_temp("a")]] = 5;
  auto pinned = check_solution(bad, prob);
  CHECK((has_error(pinned, "calling-convention") || has_error(pinned, "domain: loc.a")));
  bad = s;
  TempId c = *prob.function.find_temp("c"), k = *prob.function.find_temp("k");
  bad.values[prob.loc_var[k]] = s.values[prob.loc_var[c]];
  bad.values[prob.loc_var[*prob.function.find_temp("k2")]] = s.values[prob.loc_var[c]];
  CHECK(has_error(check_solution(bad, prob), "interference"));
}

TEST_CASE("objective of a straight-line block") {
  auto f = parse_function("func s(a:public)\nblock 0\n  x = add a, 1\n  y = xor x, 2\n"
                          "  z = or y, 4\n  ret z\n");
  auto prob = problem_for(f, SecMode::None);
  auto s = best(prob);
  CHECK(objective_value(s, prob) == Rational(4));
  CHECK(s.objective == Rational(4));
  auto m = encode_solution(s, prob);
  std::vector<std::uint8_t> in{1};
  CHECK(run(m, in, tight8()).cycles == 4);
}

TEST_CASE("objective weighs block costs") {
  auto f = parse_function("func w(a:public)\nblock 0\n  x = add a, 1\n  y = add x, 1\n"
                          "  z = add y, 1\n  u = add z, 1\nblock 1 weight 2\n  p = add u, 1\n"
                          "  q = add p, 1\n  r = add q, 1\n  s = add r, 1\n  ret s\n");
  auto s = best(problem_for(f, SecMode::None));
  CHECK(s.objective == Rational(14));
  auto half = parse_function("func h(a:public)\nblock 0 weight 1/2\n  x = add a, 1\n  ret x\n");
  auto ph = problem_for(half, SecMode::None);
  CHECK(ph.weight_scale == 2);
  CHECK(best(ph).objective == Rational(1));
}

TEST_CASE("C_opt bound is the floor of the scaled gap") {
  auto f = load("bench/check_bit.mir");
  auto prep = prepare(f, SecMode::Tsc);
  auto prob = build_problem(prep.function, prep.pairs, prep.psets, tight8(), SecMode::Tsc,
                            Rational(1, 10), Rational(15));
  REQUIRE(prob.bound);
  CHECK(*prob.bound == 16); // floor(1.1 * 15)
  CHECK(families(prob).count("optimality-gap") == 1);
  auto again = with_bound(prob, Rational(0), Rational(15));
  CHECK(*again.bound == 15);
  CHECK_THROWS_AS(build_problem(prep.function, prep.pairs, prep.psets, tight8(), SecMode::Tsc,
                                Rational(-1), Rational(15)),
                  ModelError);
}

TEST_CASE("more register inputs than registers is infeasible by construction") {
  MachineProfile tiny = tight8();
  tiny.name = "tiny";
  tiny.num_registers = 2;
  auto f = load("bench/masked_xor.mir");
  CHECK_THROWS_AS(problem_for(f, SecMode::None, tiny), ModelError);
}

TEST_CASE("emit_model is deterministic and lists every family") {
  auto f = load("bench/check_bit.mir");
  auto a = emit_model(problem_for(f, SecMode::Tsc));
  auto b = emit_model(problem_for(f, SecMode::Tsc));
  CHECK(a == b);
  for (const char *fam : {"dependency", "interference", "balance", "single-issue"})
    CHECK(a.find(std::string("(") + fam) != std::string::npos);
}

TEST_CASE("prepare per mode") {
  auto cb = load("bench/check_bit.mir");
  CHECK(prepare(cb, SecMode::None).function == cb);
  CHECK(prepare(cb, SecMode::Tsc).function.blocks.size() == 4);
  CHECK(prepare(cb, SecMode::Tsc, Balancing::Cbb).function.blocks[1].ops.size() == 3);
  auto broken = load("fixtures/masked_broken.mir");
  auto p = prepare(broken, SecMode::Psc);
  CHECK(p.function.blocks[0].ops[0].uses[0] == Operand::temp(*broken.find_temp("key")));
  CHECK_FALSE(p.pairs.rpairs.empty());
  CHECK(auto_mode(cb) == SecMode::Tsc);
  CHECK(auto_mode(broken) == SecMode::Psc);
  CHECK(auto_mode(load("fixtures/all_public.mir")) == SecMode::None);
}

TEST_CASE("property: the checker accepts solver output and its encoding runs like the IR") {
  std::mt19937_64 g(17);
  for (int i = 0; i < 60; ++i) {
    auto f = parse_function(testing::random_function(g, true));
    for (SecMode mode : {SecMode::None, SecMode::Tsc, SecMode::Psc}) {
      auto prob = problem_for(f, mode);
      auto r = solve_optimal(prob, 3);
      if (!r.solution)
        continue;
      CHECK(check_solution(*r.solution, prob).empty());
      CHECK(objective_value(*r.solution, prob) == r.solution->objective);
      auto m = encode_solution(*r.solution, prob);
      for (int k = 0; k < 20; ++k) {
        std::vector<std::uint8_t> in;
        for (std::size_t j = 0; j < f.inputs.size(); ++j)
          in.push_back(static_cast<std::uint8_t>(g()));
        CHECK(run(m, in, tight8()).result == testing::eval_ir(f, in).result);
      }
    }
  }
}
