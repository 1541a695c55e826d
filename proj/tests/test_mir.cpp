#include <doctest.h>

#include <random>

#include "secdiv/mir.hpp"
#include "support.hpp"

using namespace secdiv;
using testing::load;

TEST_CASE("masked xor parses to one block with three operations") {
  auto f = load("bench/masked_xor.mir");
  REQUIRE(f.blocks.size() == 1);
  CHECK(f.blocks[0].ops.size() == 3);
  CHECK(f.blocks[0].ops.back().opcode == Opcode::Ret);
  CHECK(f.inputs.size() == 3);
  CHECK(f.inputs[1].label == Label::Secret);
  CHECK(f.inputs[2].label == Label::Random);
  auto mk = f.find_temp("mk");
  REQUIRE(mk);
  CHECK(f.temps[*mk].def_site == f.blocks[0].ops[0].id);
}

TEST_CASE("a lone ret is one block with one operation") {
  auto f = load("fixtures/empty_ret.mir");
  CHECK(f.blocks.size() == 1);
  CHECK(f.op_count() == 1);
}

TEST_CASE("back edge is rejected") {
  try {
    load("fixtures/back_edge.mir");
    FAIL("expected ValidationError");
  } catch (const ValidationError &e) {
    CHECK(std::string(e.what()).find("back edge") != std::string::npos);
  }
}

TEST_CASE("unlabeled input is rejected") {
  CHECK_THROWS_AS(load("fixtures/unlabeled.mir"), ValidationError);
}

TEST_CASE("syntax error carries line and column") {
  try {
    load("fixtures/syntax_error.mir");
    FAIL("expected ParseError");
  } catch (const ParseError &e) {
    CHECK(e.line() == 3);
    CHECK(e.column() > 1);
  }
}

TEST_CASE("other structural errors") {
  CHECK_THROWS_AS(parse_function("func f(a:public)\nblock 0\n  x = add a, 1\n"), ValidationError);
  CHECK_THROWS_WITH(parse_function("func f(a:public)\nblock 0\n  ret b\n"),
                    doctest::Contains("undefined temp"));
  CHECK_THROWS_WITH(parse_function("func f(a:public)\nblock 0\n  x = li 1\n  x = li 2\n  ret x\n"),
                    doctest::Contains("defined twice"));
  CHECK_THROWS_AS(parse_function("func f(a:public)\nblock 0\n  b 1\n  ret a\nblock 1\n  ret a\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_function("func f(a:public)\nblock 0 weight 0\n  ret a\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_function("func f(a:public)\nblock 0\n  x = frob a\n  ret x\n"),
                  ParseError);
}

TEST_CASE("cfg of the if-check shape") {
  auto f = load("bench/check_bit.mir");
  auto g = build_cfg(f);
  CHECK(g.entry == 0);
  CHECK(g.edge_count() == 3);
  CHECK(g.successors[0] == std::vector<BlockId>{2, 1});
  CHECK(g.successors[1] == std::vector<BlockId>{2});
  CHECK(g.exits == std::vector<BlockId>{2});
  CHECK(g.is_acyclic());
}

TEST_CASE("cfg of a single block and of a diamond") {
  CHECK(build_cfg(load("bench/masked_xor.mir")).edge_count() == 0);
  auto g = build_cfg(load("fixtures/diamond.mir"));
  CHECK(g.size() == 4);
  CHECK(g.edge_count() == 4);
  CHECK(g.predecessors[3].size() == 2);
}

TEST_CASE("dominators and all paths") {
  auto f = load("fixtures/diamond.mir");
  auto dom = dominators(f);
  CHECK(dom[3][0]);
  CHECK_FALSE(dom[3][1]);
  CHECK(dom[1][0]);
  auto paths = all_paths(build_cfg(f));
  CHECK(paths.size() == 2);
}

TEST_CASE("corpus round trip is canonical") {
  std::vector<std::string> files;
  for (const auto &n : testing::bench_names())
    files.push_back("bench/" + n + ".mir");
  for (const auto &n : testing::fixture_names())
    files.push_back("fixtures/" + n + ".mir");
  for (const auto &file : files) {
    CAPTURE(file);
    auto f = load(file);
    auto text = serialize_function(f);
    auto g = parse_function(text);
    CHECK(g == f);
    CHECK(serialize_function(g) == text);
  }
}

TEST_CASE("programmatic masked xor prints as the corpus file") {
  FunctionIR f;
  f.name = "masked_xor";
  f.temps = {{"pub", 8, kInputDef, Label::Public},
             {"key", 8, kInputDef, Label::Secret},
             {"mask", 8, kInputDef, Label::Random},
             {"mk", 8, 0, std::nullopt},
             {"t", 8, 1, std::nullopt}};
  f.inputs = {{false, 0, Label::Public}, {false, 1, Label::Secret}, {false, 2, Label::Random}};
  Block b;
  b.ops.push_back({0, Opcode::Xor, {Operand::temp(1), Operand::temp(2)}, 3u, false, {}, {}});
  b.ops.push_back({1, Opcode::Xor, {Operand::temp(3), Operand::temp(0)}, 4u, false, {}, {}});
  b.ops.push_back({2, Opcode::Ret, {Operand::temp(4)}, std::nullopt, false, {}, {}});
  f.blocks.push_back(b);
  validate(f);
  std::string corpus = testing::slurp(testing::corpus_path("bench/masked_xor.mir"));
  std::string body;
  std::istringstream in(corpus);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("#", 0) != 0)
      body += line + "\n";
  CHECK(serialize_function(f) == body);
}

TEST_CASE("optional copies print with opt") {
  auto text = serialize_function(load("fixtures/copies.mir"));
  CHECK(text.find("opt c2 = copy c") != std::string::npos);
  CHECK(text.find("opt k2 = li 5") != std::string::npos);
}

TEST_CASE("block weights survive the round trip") {
  auto f = parse_function("func w(a:public)\nblock 0 weight 3/2\n  ret a\n");
  CHECK(f.blocks[0].weight == Rational(3, 2));
  CHECK(serialize_function(f).find("weight 3/2") != std::string::npos);
}

TEST_CASE("property: random functions round trip, stay acyclic, define before use") {
  std::mt19937_64 g(7);
  for (int i = 0; i < 300; ++i) {
    auto text = testing::random_function(g, true);
    CAPTURE(text);
    auto f = parse_function(text);
    CHECK(parse_function(serialize_function(f)) == f);
    CHECK(build_cfg(f).is_acyclic());
    std::vector<bool> defined(f.temps.size(), false);
    for (const auto &in : f.inputs)
      if (!in.in_memory)
        defined[in.index] = true;
    for (const auto &b : f.blocks)
      for (const auto &op : b.ops) {
        for (const auto &u : op.uses)
          if (!u.is_imm)
            CHECK(defined[u.value]);
        if (op.def)
          defined[*op.def] = true;
      }
  }
}

TEST_CASE("rational parsing") {
  CHECK(parse_rational("1/10") == Rational(1, 10));
  CHECK(parse_rational("2") == Rational(2));
  CHECK(parse_rational("0.25") == Rational(1, 4));
  CHECK(format_rational(Rational(3, 2)) == "3/2");
}
