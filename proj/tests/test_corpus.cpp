#include <doctest.h>

#include <set>

#include "images.hpp"
#include "mend/corpus.hpp"

using namespace mend;
using namespace mend::corpus;

TEST_SUITE_BEGIN("corpus");

TEST_CASE("generation is deterministic per seed") {
  auto a = generate_corpus(5, 6);
  auto b = generate_corpus(5, 6);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tmpl == b[i].tmpl);
    CHECK(a[i].vuln_elf == b[i].vuln_elf);
    CHECK(a[i].fixed_elf == b[i].fixed_elf);
  }
  auto c = generate_corpus(6, 1);
  CHECK(c[0].vuln_elf != a[0].vuln_elf);  // seed actually feeds the generator
}

TEST_CASE("templates cycle and cases carry the expected pieces") {
  auto cases = generate_corpus(9, 6);
  REQUIRE(cases.size() == 6);
  std::set<std::string> tmpls;
  for (const auto& c : cases) {
    tmpls.insert(c.tmpl);
    CHECK(!c.vuln_elf.empty());
    CHECK(!c.fixed_elf.empty());
    CHECK(c.affected == std::vector<std::string>{"process"});
    CHECK(!c.vectors.empty());
    CHECK(c.pov.has_value());
    CHECK(!c.truth_vuln.empty());
    CHECK(!c.truth_fixed.empty());
  }
  CHECK(tmpls.size() == 6);
}

TEST_CASE("fixed runs the regular vectors clean and the pov diverges") {
  auto cases = generate_corpus(13, 6);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    elf::BinaryImage vuln = elf::BinaryImage::from_bytes(c.vuln_elf);
    elf::BinaryImage fixed = elf::BinaryImage::from_bytes(c.fixed_elf);

    for (const auto& v : c.vectors) {
      CAPTURE(v.name);
      interp::TestVector on_fixed = v;
      on_fixed.entry = v.entry_alt ? v.entry_alt : v.entry;
      CHECK_FALSE(interp::run_outcome(fixed, on_fixed).faulted);
    }
    auto pov = interp::differential_check(vuln, fixed, {*c.pov});
    REQUIRE(pov.size() == 1);
    CHECK_FALSE(pov[0].pass);
  }
}

TEST_CASE("write_case and read_case round-trip") {
  auto cases = generate_corpus(17, 2);
  std::string dir = images::scratch_dir("corpus-rt");
  for (const auto& c : cases) {
    std::string cdir = dir + "/" + c.name;
    write_case(c, cdir);
    CorpusCase back = read_case(cdir);
    CHECK(back.name == c.name);
    CHECK(back.tmpl == c.tmpl);
    CHECK(back.vuln_elf == c.vuln_elf);
    CHECK(back.fixed_elf == c.fixed_elf);
    CHECK(back.affected == c.affected);
    CHECK(back.stripped == c.stripped);
    CHECK(back.vectors.size() == c.vectors.size());
    for (size_t i = 0; i < c.vectors.size(); ++i) {
      CHECK(back.vectors[i].name == c.vectors[i].name);
      CHECK(back.vectors[i].entry == c.vectors[i].entry);
      CHECK(back.vectors[i].regs == c.vectors[i].regs);
      CHECK(back.vectors[i].memory == c.vectors[i].memory);
      CHECK(back.vectors[i].out_regs == c.vectors[i].out_regs);
      CHECK(back.vectors[i].out_syms == c.vectors[i].out_syms);
    }
    REQUIRE(back.pov.has_value());
    CHECK(back.pov->name == c.pov->name);
    REQUIRE(back.truth_vuln.size() == c.truth_vuln.size());
    for (size_t i = 0; i < c.truth_vuln.size(); ++i) {
      CHECK(back.truth_vuln[i].entry == c.truth_vuln[i].entry);
      CHECK(back.truth_vuln[i].block_starts == c.truth_vuln[i].block_starts);
      CHECK(back.truth_vuln[i].edges == c.truth_vuln[i].edges);
    }
  }
}

TEST_SUITE_END();
