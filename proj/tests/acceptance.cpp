// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "secdiv/pipeline.hpp"
#include "support.hpp"

using namespace secdiv;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string &why) {
    if (pass)
      detail.str("");
    if (!pass)
      detail << "; ";
    pass = false;
    detail << why;
  }
  void note(const std::string &s) {
    if (pass)
      detail << (detail.tellp() > 0 ? "; " : "") << s;
  }
};

std::vector<std::string> bench_files() {
  std::vector<std::string> out;
  for (const auto &n : testing::bench_names())
    out.push_back("bench/" + n + ".mir");
  return out;
}

std::vector<std::string> benchmarks_with_mode(SecMode m) {
  std::vector<std::string> out;
  for (const auto &n : testing::bench_names())
    if (auto_mode(testing::load("bench/" + n + ".mir")) == m)
      out.push_back(n);
  return out;
}

PoolConfig pool_config(const std::string &mode, const std::string &profile, int n) {
  PoolConfig c;
  c.mode = mode;
  c.profile = profile;
  c.gap = Rational(1, 10);
  c.variants = n;
  c.budget_secs = 600;
  return c;
}

// every pool built along the way, for the equivalence sweep
std::vector<std::pair<std::string, std::vector<MachineProgram>>> all_pools;

PoolRun pool(const std::string &bench, const std::string &mode, const std::string &profile,
             int n = 20) {
  auto run = run_pool(testing::load("bench/" + bench + ".mir"), pool_config(mode, profile, n));
  all_pools.push_back({bench + "/" + mode + "/" + profile, run.programs});
  return run;
}

std::string fmt(double x, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

double as_double(const Rational &r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

Instr xor3(int d, int a, int b) {
  return {MOp::Xor, false, static_cast<std::uint8_t>(d), static_cast<std::uint8_t>(a),
          static_cast<std::uint8_t>(b)};
}

MachineProgram hand(std::vector<Instr> code) {
  MachineProgram m;
  m.profile = "tight8";
  m.function = "hand";
  m.inputs = {{false, 0, Label::Public}, {false, 1, Label::Secret}, {false, 2, Label::Random}};
  m.block_offsets = {0};
  for (const auto &i : code)
    m.words.push_back(encode_word(i));
  return m;
}

Verdict c1_optimality() {
  Verdict v;
  auto t0 = Clock::now();
  std::vector<std::string> files = bench_files();
  for (const auto &n : testing::fixture_names())
    files.push_back("fixtures/" + n + ".mir");
  int compared = 0;
  for (const auto &file : files) {
    auto f = testing::load(file);
    if (f.op_count() > 10)
      continue;
    for (SecMode mode : {SecMode::None, SecMode::Tsc, SecMode::Psc}) {
      auto prep = prepare(f, mode);
      auto prob = build_problem(prep.function, prep.pairs, prep.psets, tight8(), mode,
                                Rational(0), std::nullopt);
      auto r = solve_optimal(prob, 60);
      auto o = testing::brute_force_optimum(prob);
      std::string tag = file + " " + std::string(to_string(mode));
      if (r.status == SolveStatus::Timeout)
        v.fail(tag + ": solver timeout");
      else if (o.scaled.has_value() != r.solution.has_value())
        v.fail(tag + ": feasibility differs");
      else if (o.scaled && *o.scaled != r.solution->scaled_objective)
        v.fail(tag + ": solver " + std::to_string(r.solution->scaled_objective) + " vs " +
               std::to_string(*o.scaled));
      ++compared;
    }
  }
  double secs = since(t0);
  if (secs >= 60)
    v.fail("took " + fmt(secs) + " s");
  v.note(std::to_string(compared) + " function/mode pairs exact, " + fmt(secs) + " s");
  return v;
}

Verdict c2_cr() {
  Verdict v;
  int checked = 0;
  for (const std::string b : {"check_bit", "share_value"}) {
    auto run = pool(b, "tsc", "tight8");
    if (run.programs.empty())
      v.fail(b + ": no variants");
    for (std::size_t i = 0; i < run.programs.size(); ++i) {
      auto rep = check_cr(run.programs[i], run.prepared.psets);
      if (!rep.secure() || !rep.complete || rep.probes.size() < 3)
        v.fail(b + " variant " + std::to_string(i) + " not constant-resource");
      ++checked;
    }
  }
  v.note(std::to_string(checked) + " TSC variants BCET=WCET over 3 probes");
  return v;
}

Verdict c3_overhead() {
  Verdict v;
  auto t0 = Clock::now();
  for (const auto &b : benchmarks_with_mode(SecMode::Tsc)) {
    auto f = testing::load("bench/" + b + ".mir");
    auto none = run_compile(f, tight8(), SecMode::None);
    auto tsc = run_compile(f, tight8(), SecMode::Tsc);
    if (!none.result.solution || !tsc.result.solution) {
      v.fail(b + ": no solution");
      continue;
    }
    Rational n = none.result.solution->objective, t = tsc.result.solution->objective;
    if (t < n)
      v.fail(b + ": TSC below NONE");
    if (b == "check_bit" && !(t > n))
      v.fail("check_bit: no strict overhead");
    v.note(b + " +" + percent((t - n) / n) + "%");
  }
  if (since(t0) >= 120)
    v.fail("took " + fmt(since(t0)) + " s");
  return v;
}

Verdict c4_psc() {
  Verdict v;
  int checked = 0;
  for (const auto &b : benchmarks_with_mode(SecMode::Psc)) {
    auto run = pool(b, "psc", "tight8");
    if (run.programs.empty())
      v.fail(b + ": no variants");
    for (std::size_t i = 0; i < run.programs.size(); ++i) {
      auto rep = check_psc(run.programs[i]);
      if (!rep.secure())
        v.fail(b + " variant " + std::to_string(i) + " leaks");
      ++checked;
    }
  }
  auto bad = check_psc(hand({xor3(2, 1, 2), xor3(0, 0, 2), {MOp::Ret}}));
  const PscSite *site = bad.find("0x0:r2");
  if (!site || !site->leak)
    v.fail("hand-built insecure xor not flagged at 0x0:r2");
  v.note(std::to_string(checked) + " PSC variants leak-free; hand-built xor LEAK at 0x0:r2");
  return v;
}

Verdict c5_naive() {
  Verdict v;
  auto t0 = Clock::now();
  auto cb = run_pool(testing::load("bench/check_bit.mir"), pool_config("naive", "tight8", 50));
  all_pools.push_back({"check_bit/naive", cb.programs});
  int cr_bad = 0;
  for (const auto &m : cb.programs)
    cr_bad += check_cr(m, cb.prepared.psets).secure() ? 0 : 1;
  auto mx = run_pool(testing::load("bench/masked_xor.mir"), pool_config("naive", "tight8", 50));
  all_pools.push_back({"masked_xor/naive", mx.programs});
  int rot_bad = 0;
  for (const auto &m : mx.programs)
    rot_bad += check_psc(m).secure() ? 0 : 1;
  Rational cr_rate(cr_bad, static_cast<std::int64_t>(cb.programs.size()));
  Rational rot_rate(rot_bad, static_cast<std::int64_t>(mx.programs.size()));
  if (!(cr_rate > Rational(1, 2)))
    v.fail("check_bit CR breakage " + percent(cr_rate) + "% <= 50%");
  if (!(rot_rate > Rational(3, 10)))
    v.fail("masked_xor ROT breakage " + percent(rot_rate) + "% <= 30%");
  if (since(t0) >= 60)
    v.fail("took " + fmt(since(t0)) + " s");
  v.note("check_bit " + std::to_string(cr_bad) + "/" + std::to_string(cb.programs.size()) +
         " CR-violating (" + percent(cr_rate) + "%), masked_xor " + std::to_string(rot_bad) + "/" +
         std::to_string(mx.programs.size()) + " ROT-leaking (" + percent(rot_rate) + "%)");
  return v;
}

Verdict c6_diversity() {
  Verdict v;
  for (const auto &b : testing::bench_names()) {
    auto run = pool(b, "auto", "tight8");
    const auto &p = run.pool;
    if (p.variants.empty()) {
      v.fail(b + ": " + p.reason);
      continue;
    }
    if (!(p.variants.size() == 20 || p.reason == "EXHAUSTED"))
      v.fail(b + ": " + std::to_string(p.variants.size()) + " variants, " + p.reason);
    auto bounded = with_bound(run.problem, p.gap, p.variants[0].objective);
    for (std::size_t i = 0; i < p.variants.size(); ++i) {
      auto errs = check_solution(p.variants[i], bounded);
      if (!errs.empty())
        v.fail(b + " variant " + std::to_string(i) + ": " + errs[0]);
      if (p.variants[i].scaled_objective > *bounded.bound)
        v.fail(b + " variant " + std::to_string(i) + " above bound");
      for (std::size_t j = i + 1; j < p.variants.size(); ++j)
        if (distance(p.variants[i], p.variants[j], run.problem) < p.dthresh)
          v.fail(b + " variants " + std::to_string(i) + "," + std::to_string(j) + " too close");
    }
    v.note(b + " " + std::to_string(p.variants.size()) + " " + p.reason);
  }
  return v;
}

Verdict c7_gadgets() {
  Verdict v;
  int compared = 0;
  for (const auto &b : testing::bench_names()) {
    auto tight = pool(b, "auto", "tight8");
    auto wide = pool(b, "auto", "wide32");
    if (tight.programs.size() < 20 || wide.programs.size() < 20)
      continue;
    Rational mt = pool_histogram(tight.programs).mean, mw = pool_histogram(wide.programs).mean;
    if (mw > mt)
      v.fail(b + ": wide32 " + fmt(as_double(mw), 3) + " > tight8 " + fmt(as_double(mt), 3));
    if (!(mt < Rational(1)) || !(mw < Rational(1)))
      v.fail(b + ": mean srate reaches 1");
    v.note(b + " " + fmt(as_double(mw), 3) + "<=" + fmt(as_double(mt), 3));
    ++compared;
  }
  if (compared == 0)
    v.fail("no benchmark produced two pools of 20");
  auto a = hand({xor3(1, 1, 2), xor3(0, 0, 1), {MOp::Ret}});
  auto b = hand({{MOp::Add, false, 3, 0, 1}, {MOp::Or, false, 3, 3, 2}, {MOp::Ret, false, 3, 0, 0}});
  auto same = pool_histogram({a, a, a, a});
  if (same.high != same.total() || same.total() != 12)
    v.fail("identical pool not 100% in (0.2,1]");
  auto disjoint = pool_histogram({a, b});
  if (disjoint.zero != disjoint.total())
    v.fail("disjoint pool not 100% in {0}");
  return v;
}

Verdict c8_compat() {
  Verdict v;
  for (const auto &b : testing::bench_names()) {
    auto aware = pool(b, "auto", "tight8");
    auto unaware = pool(b, "none", "tight8");
    std::size_t n = std::min(aware.programs.size(), unaware.programs.size());
    if (n < 2) {
      v.fail(b + ": pools too small");
      continue;
    }
    std::vector<MachineProgram> pa(aware.programs.begin(), aware.programs.begin() + n);
    std::vector<MachineProgram> pu(unaware.programs.begin(), unaware.programs.begin() + n);
    double ma = as_double(pool_histogram(pa).mean), mu = as_double(pool_histogram(pu).mean);
    if (std::abs(ma - mu) > 0.15)
      v.fail(b + ": aware " + fmt(ma, 3) + " vs unaware " + fmt(mu, 3));
    v.note(b + " " + fmt(ma, 3) + "/" + fmt(mu, 3));
  }
  return v;
}

Verdict c9_equivalence() {
  Verdict v;
  std::size_t checked = 0;
  for (const auto &[name, programs] : all_pools)
    for (std::size_t i = 1; i < programs.size(); ++i) {
      auto rep = check_equivalence(programs[0], programs[i]);
      if (!rep.ok())
        v.fail(name + " variant " + std::to_string(i) + " differs");
      ++checked;
    }
  v.note(std::to_string(checked) + " variants across " + std::to_string(all_pools.size()) +
         " pools match their baseline");
  return v;
}

std::string run_cli(const std::string &args, const fs::path &out) {
  std::string cmd = std::string(SECDIV_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
  int st = std::system(cmd.c_str());
  (void)st;
  return testing::slurp(out.string());
}

Verdict c10_determinism() {
  Verdict v;
  auto base = fs::temp_directory_path() / ("secdiv_acceptance_" + std::to_string(getpid()));
  std::vector<std::string> outputs[2];
  for (int round = 0; round < 2; ++round) {
    auto dir = base / ("round" + std::to_string(round));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto &b : testing::bench_names()) {
      auto in = testing::corpus_path("bench/" + b + ".mir");
      outputs[round].push_back(run_cli("compile " + in, dir / "compile.out"));
      run_cli("diversify --gap 10 --variants 20 --seed 5 " + in + " --out " + (dir / b).string(),
              dir / "div.out");
      outputs[round].push_back(testing::slurp((dir / b / "manifest.txt").string()));
      outputs[round].push_back(run_cli("verify " + (dir / b).string(), dir / "verify.out"));
      outputs[round].push_back(run_cli("gadgets " + (dir / b).string(), dir / "gadgets.out"));
    }
    outputs[round].push_back(run_cli("report " + dir.string(), dir / "report.out"));
  }
  // the report names its directory; compare it with the round stripped
  auto strip = [](std::string s) {
    for (auto pos = s.find("round1"); pos != std::string::npos; pos = s.find("round1"))
      s.replace(pos, 6, "round0");
    return s;
  };
  for (std::size_t i = 0; i < outputs[0].size(); ++i)
    if (outputs[0][i] != strip(outputs[1][i]) || outputs[0][i].empty())
      v.fail("output " + std::to_string(i) + " differs or is empty");
  fs::remove_all(base);
  v.note(std::to_string(outputs[0].size()) + " outputs byte-identical across two runs");
  return v;
}

} // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"solver optimality vs exhaustive enumeration", c1_optimality},
      {"CR end-to-end on TSC pools", c2_cr},
      {"security overhead direction", c3_overhead},
      {"PSC end-to-end on PSC pools", c4_psc},
      {"naive diversification breaks security", c5_naive},
      {"diversity production", c6_diversity},
      {"gadget survival trend", c7_gadgets},
      {"mitigation compatibility", c8_compat},
      {"functional equivalence of all pools", c9_equivalence},
      {"determinism", c10_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception &e) {
      v.fail(std::string("exception: ") + e.what());
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": "
              << v.detail.str() << std::endl;
    failed += v.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
