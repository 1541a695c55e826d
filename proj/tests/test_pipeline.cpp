#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

#include "secdiv/pipeline.hpp"
#include "support.hpp"

using namespace secdiv;
using testing::load;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  auto p = fs::temp_directory_path() / ("secdiv_pipeline_" + std::to_string(getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

struct Cli {
  int code = -1;
  std::string out;
};

Cli cli(const std::string &args) {
  auto out = scratch("stdout.txt");
  std::string cmd = std::string(SECDIV_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
  int st = std::system(cmd.c_str());
  Cli r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.out = testing::slurp(out.string());
  return r;
}

std::string corpus(const std::string &rel) { return testing::corpus_path(rel); }

} // namespace

TEST_CASE("compile text for check_bit") {
  auto f = load("bench/check_bit.mir");
  auto run = run_compile(f, tight8(), SecMode::Tsc);
  CHECK(run.exit_code() == kExitOk);
  auto text = compile_text(f, run);
  CHECK(text.find("status OPTIMAL") != std::string::npos);
  CHECK(text.find("objective 15") != std::string::npos);
  CHECK(text.find("baseline 10") != std::string::npos);
  CHECK(text.find("overhead 50.00%") != std::string::npos);
  CHECK(text.find("oracle cr SECURE") != std::string::npos);
  CHECK(text == compile_text(f, run_compile(f, tight8(), SecMode::Tsc)));
}

TEST_CASE("compile exit codes") {
  CHECK(run_compile(load("fixtures/unmaskable.mir"), tight8(), SecMode::Psc).exit_code() ==
        kExitUnsat);
  CHECK(cli("compile --mode psc " + corpus("bench/masked_xor.mir")).code == 0);
  CHECK(cli("compile " + corpus("fixtures/syntax_error.mir")).code == 1);
  CHECK(cli("compile " + corpus("fixtures/back_edge.mir")).code == 1);
  CHECK(cli("compile " + corpus("fixtures/no_such_file.mir")).code == 1);
  CHECK(cli("compile --mode bogus " + corpus("bench/masked_xor.mir")).code == 2);
  CHECK(cli("diversify --gap -5 " + corpus("bench/masked_xor.mir")).code == 2);
  CHECK(cli("").code == 2);
  CHECK(cli("compile --mode psc " + corpus("fixtures/unmaskable.mir")).code == 3);
}

TEST_CASE("emit-analysis lists the leak pairs") {
  auto r = cli("compile --mode psc --emit-analysis " + corpus("bench/masked_xor.mir"));
  CHECK(r.code == 0);
  CHECK(r.out.find("rpairs 4") != std::string::npos);
  CHECK(r.out.find("  mask mk\n") != std::string::npos);
  CHECK(r.out.find("  key <initial>\n") != std::string::npos);
}

TEST_CASE("pool round trip through disk") {
  PoolConfig cfg;
  cfg.mode = "tsc";
  cfg.gap = Rational(1, 10);
  cfg.variants = 8;
  auto f = load("bench/check_bit.mir");
  auto run = run_pool(f, cfg);
  CHECK(run.exit_code() == kExitOk);
  auto dir = scratch("cb_pool");
  write_pool(dir, run);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "timing.txt"));
  CHECK(fs::exists(dir / "variant_000.bin"));
  auto disk = read_pool(dir);
  CHECK(disk.programs == run.programs);
  CHECK(disk.checks() == SecMode::Tsc);
  CHECK(serialize_function(disk.function) == serialize_function(run.prepared.function));
  CHECK(disk.total_secs.has_value());
  CHECK(disk.fields.at("function") == "check_bit");
  for (const auto &v : verify_pool(disk))
    CHECK(v.pass());
  CHECK(manifest_text(run) == manifest_text(run_pool(f, cfg)));
  CHECK(manifest_text(run).find("total_secs") == std::string::npos);
}

TEST_CASE("read_pool names what is missing") {
  auto dir = scratch("empty");
  fs::create_directories(dir);
  CHECK_THROWS_WITH_AS(read_pool(dir), doctest::Contains("manifest.txt"), std::runtime_error);
  CHECK(cli("verify " + dir.string()).code == 1);
}

TEST_CASE("CLI diversify, verify, gadgets and report") {
  auto root = scratch("cli");
  fs::create_directories(root);
  auto tsc = root / "cb_tsc", naive = root / "cb_naive";
  auto a = cli("diversify --mode tsc --gap 10 --variants 10 " + corpus("bench/check_bit.mir") +
               " --out " + tsc.string());
  CHECK(a.code == 0);
  auto b = cli("diversify --mode tsc --gap 10 --variants 10 " + corpus("bench/check_bit.mir") +
               " --out " + (root / "again").string());
  CHECK(a.out == b.out);
  CHECK(testing::slurp((tsc / "manifest.txt").string()) ==
        testing::slurp((root / "again" / "manifest.txt").string()));
  CHECK(cli("diversify --mode naive --variants 30 --seed 3 " + corpus("bench/check_bit.mir") +
            " --out " + naive.string())
            .code == 0);
  auto v = cli("verify " + tsc.string());
  CHECK(v.code == 0);
  CHECK(v.out.find("10/10 variants pass") != std::string::npos);
  CHECK(cli("verify " + naive.string()).code == 5);
  auto g = cli("gadgets --format csv " + tsc.string() + " " + naive.string());
  CHECK(g.code == 0);
  CHECK(g.out.find(',') != std::string::npos);
  fs::remove_all(root / "again");
  auto rep = cli("report " + root.string());
  CHECK(rep.code == 0);
  CHECK(rep.out.find("check_bit") != std::string::npos);
  CHECK(rep.out == cli("report " + root.string()).out);
}

TEST_CASE("percent formatting") {
  CHECK(percent(Rational(1, 2)) == "50.00");
  CHECK(percent(Rational(2, 3)) == "66.67");
  CHECK(percent(Rational(0)) == "0.00");
}
