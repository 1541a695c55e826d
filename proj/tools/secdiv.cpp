// secdiv: compile, diversify, verify and report on MiniRISC functions.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "secdiv/pipeline.hpp"

using namespace secdiv;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string input;
  std::vector<std::string> dirs;
  std::string mode = "auto";
  std::string profile = "tight8";
  std::string gap = "0";
  int variants = 20;
  int dthresh = 1;
  std::uint64_t seed = 0;
  double budget = 600;
  std::string out;
  std::string format = "text";
  std::string balance = "ebb";
  bool emit_analysis = false;
  bool emit_model = false;
  bool timing = false;
};

void save(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
  out << text;
}

Balancing balancing_of(const Options &o) {
  return o.balance == "cbb" ? Balancing::Cbb : Balancing::Ebb;
}

void emit_extras(const Options &o, const Prepared &prep, const CopProblem &prob) {
  if (o.emit_analysis) {
    auto text = analysis_report(prep.function, prep.env, prep.psets, prep.pairs);
    if (o.out.empty())
      std::cout << text;
    else
      save(fs::path(o.out) / "analysis.txt", text);
  }
  if (o.emit_model) {
    auto text = emit_model(prob);
    if (o.out.empty())
      std::cout << text;
    else
      save(fs::path(o.out) / "model.sexp", text);
  }
}

int cmd_compile(const Options &o) {
  auto f = read_function(o.input);
  std::string mode_name = o.mode;
  if (mode_name == "naive" || mode_name == "auto")
    mode_name = std::string(to_string(auto_mode(f)));
  SecMode mode = *parse_mode(mode_name);
  auto run = run_compile(f, profile_by_name(o.profile), mode, balancing_of(o), o.budget, o.seed);
  auto text = compile_text(f, run);
  std::cout << text;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    save(fs::path(o.out) / "compile.txt", text);
    if (run.program) {
      auto bytes = dump_program(*run.program);
      save(fs::path(o.out) / "program.bin", std::string(bytes.begin(), bytes.end()));
    }
  }
  emit_extras(o, run.prepared, run.problem);
  if (run.cr)
    for (const auto &r : run.cr->records())
      std::cerr << r << "\n";
  if (run.psc && !run.psc->secure())
    for (const auto &r : run.psc->records())
      std::cerr << r << "\n";
  return run.exit_code();
}

int cmd_diversify(const Options &o) {
  auto f = read_function(o.input);
  PoolConfig cfg;
  cfg.mode = o.mode;
  cfg.profile = o.profile;
  cfg.balancing = balancing_of(o);
  cfg.gap = parse_rational(o.gap) / 100;
  cfg.variants = o.variants;
  cfg.dthresh = o.dthresh;
  cfg.seed = o.seed;
  cfg.budget_secs = o.budget;
  auto run = run_pool(f, cfg);
  auto manifest = manifest_text(run);
  if (!o.out.empty()) {
    write_pool(o.out, run);
    emit_extras(o, run.prepared, run.problem);
  }
  std::cout << manifest;
  std::cerr << timing_text(run);
  return run.exit_code();
}

int cmd_verify(const Options &o) {
  bool csv = o.format == "csv";
  int code = kExitOk;
  for (const auto &dir : o.dirs) {
    auto pool = read_pool(dir);
    auto verdicts = verify_pool(pool);
    int failed = 0;
    for (const auto &v : verdicts) {
      std::vector<std::string> lines;
      lines.push_back(std::string(v.equivalence.ok() ? "EQUIVALENT" : "MISMATCH") +
                      "\tequivalence\t" + std::to_string(v.equivalence.tested) + " inputs");
      if (v.cr)
        for (auto &r : v.cr->records())
          lines.push_back(r);
      if (v.psc)
        for (auto &r : v.psc->records())
          lines.push_back(r);
      for (auto &l : lines) {
        if (csv) {
          for (auto &c : l)
            if (c == '\t')
              c = ',';
        }
        std::cout << v.file << (csv ? "," : "\t") << l << "\n";
      }
      std::cout << v.file << (csv ? "," : "\t") << (v.pass() ? "PASS" : "FAIL")
                << (csv ? "," : "\t") << "verdict" << (csv ? "," : "\t")
                << (v.incomplete() ? "incomplete enumeration" : "-") << "\n";
      if (v.incomplete())
        std::cerr << "warning: " << dir << "/" << v.file << ": enumeration incomplete\n";
      failed += v.pass() ? 0 : 1;
    }
    std::cout << "# " << dir << ": " << verdicts.size() - failed << "/" << verdicts.size()
              << " variants pass\n";
    if (failed)
      code = kExitOracle;
  }
  return code;
}

int cmd_gadgets(const Options &o) {
  std::vector<PoolOnDisk> pools;
  for (const auto &dir : o.dirs)
    pools.push_back(read_pool(dir));
  std::cout << gadget_table(pools).render(o.format == "csv");
  return kExitOk;
}

int cmd_report(const Options &o) {
  std::cout << report_text(o.dirs.front(), o.format == "csv", o.timing);
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"secure diversifying backend for MiniRISC"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App *c) {
    c->add_option("--profile", o.profile, "machine profile")
        ->check(CLI::IsMember({"tight8", "wide32"}));
    c->add_option("--seed", o.seed, "search seed");
    c->add_option("--budget-secs", o.budget, "time budget per solver phase")
        ->check(CLI::PositiveNumber);
    c->add_option("--out", o.out, "output directory");
    c->add_option("--balance", o.balance, "balancing transformation")
        ->check(CLI::IsMember({"ebb", "cbb"}));
    c->add_flag("--emit-analysis", o.emit_analysis, "write the security analysis report");
    c->add_flag("--emit-model", o.emit_model, "write the constraint model");
  };

  auto *compile = app.add_subcommand("compile", "compile one function to its best solution");
  compile->add_option("input", o.input, "IR file")->required();
  compile->add_option("--mode", o.mode, "security mode")
      ->check(CLI::IsMember({"tsc", "psc", "none", "naive", "auto"}));
  add_common(compile);

  auto *div = app.add_subcommand("diversify", "produce a pool of variants");
  div->add_option("input", o.input, "IR file")->required();
  div->add_option("--mode", o.mode, "security mode")
      ->check(CLI::IsMember({"tsc", "psc", "none", "naive", "auto"}));
  div->add_option("--gap", o.gap, "optimality gap in percent");
  div->add_option("--variants", o.variants, "pool size")->check(CLI::PositiveNumber);
  div->add_option("--dthresh", o.dthresh, "minimum pairwise distance")
      ->check(CLI::PositiveNumber);
  add_common(div);

  auto *verify = app.add_subcommand("verify", "run the oracles over pools");
  verify->add_option("pools", o.dirs, "pool directories")->required();
  verify->add_option("--format", o.format)->check(CLI::IsMember({"text", "csv"}));

  auto *gadgets = app.add_subcommand("gadgets", "gadget survival histograms");
  gadgets->add_option("pools", o.dirs, "pool directories")->required();
  gadgets->add_option("--format", o.format)->check(CLI::IsMember({"text", "csv"}));

  auto *report = app.add_subcommand("report", "tables over an output directory");
  report->add_option("dir", o.dirs, "directory of compile and pool outputs")
      ->required()
      ->expected(1);
  report->add_option("--format", o.format)->check(CLI::IsMember({"text", "csv"}));
  report->add_flag("--timing", o.timing, "add wall-clock columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    Rational gap = parse_rational(o.gap);
    if (gap < Rational(0)) {
      std::cerr << "error: --gap must be >= 0\n";
      return kExitUsage;
    }
  } catch (const std::exception &) {
    std::cerr << "error: bad --gap '" << o.gap << "'\n";
    return kExitUsage;
  }

  try {
    if (*compile)
      return cmd_compile(o);
    if (*div)
      return cmd_diversify(o);
    if (*verify)
      return cmd_verify(o);
    if (*gadgets)
      return cmd_gadgets(o);
    return cmd_report(o);
  } catch (const ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ModelError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnsat;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
