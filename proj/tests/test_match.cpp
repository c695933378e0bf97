#include <doctest.h>

#include "images.hpp"
#include "mend/corpus.hpp"
#include "mend/match.hpp"

using namespace mend;
using namespace mend::match;
using isa::Cond;
using isa::Mnemonic;
using isa::Operand;

namespace {

fixture::Asm two_block_fn() {
  fixture::Asm a;
  int out = a.label();
  a.ins({Mnemonic::Push, Cond::Al, false, {Operand::reg_list(0x4010)}});
  a.ins({Mnemonic::Cmp, Cond::Al, true, {Operand::reg(0), Operand::imm(3)}});
  a.b(Cond::Eq, out);
  a.ins({Mnemonic::Add, Cond::Al, true, {Operand::reg(0), Operand::imm(1)}});
  a.bind(out);
  a.ins({Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(0x8010)}});
  return a;
}

flow::Cfg cfg_of(const elf::BinaryImage& img, uint32_t entry) {
  return flow::build_cfg(img, entry, isa::Mode::Thumb);
}

}  // namespace

TEST_SUITE_BEGIN("match");

TEST_CASE("identical functions produce only perfect pairs and no region") {
  fixture::Asm a = two_block_fn();
  elf::BinaryImage img = images::make_image(0x10000, "f", a.assemble(0x10000));
  flow::Cfg c = cfg_of(img, 0x10000);

  MatchSet ms = match_blocks(c, c);
  CHECK(ms.pairs.size() == c.blocks.size());
  for (const auto& p : ms.pairs) {
    CHECK(p.perfect);
    CHECK(p.vuln_start.has_value());
    CHECK(p.patch_start.has_value());
  }
  CHECK(ms.patch_region.empty());
  CHECK(ms.patch_region_lo == ms.patch_region_hi);
}

TEST_CASE("address operands are exempt from perfect-match comparison") {
  // Same function assembled at two bases: branch targets and pools differ
  // only in their absolute values.
  fixture::Asm a = two_block_fn();
  fixture::Asm b = two_block_fn();
  elf::BinaryImage ia = images::make_image(0x10000, "f", a.assemble(0x10000));
  elf::BinaryImage ib = images::make_image(0x30000, "f", b.assemble(0x30000));
  flow::Cfg ca = cfg_of(ia, 0x10000);
  flow::Cfg cb = cfg_of(ib, 0x30000);

  MatchSet ms = match_blocks(ca, cb);
  CHECK(ms.pairs.size() == ca.blocks.size());
  for (const auto& p : ms.pairs) CHECK(p.perfect);
  CHECK(ms.patch_region.empty());
}

TEST_CASE("a changed middle block bounds the patch region") {
  auto cases = corpus::generate_corpus(21, 1);  // missing-bounds-check
  REQUIRE(cases.size() == 1);
  const auto& c = cases[0];
  elf::BinaryImage vuln = elf::BinaryImage::from_bytes(c.vuln_elf);
  elf::BinaryImage fixed = elf::BinaryImage::from_bytes(c.fixed_elf);

  FunctionPair pr = match_functions(vuln, fixed, {"process"}).at(0);
  CHECK(pr.how == FunctionPair::How::Symbol);
  flow::Cfg cv = cfg_of(vuln, pr.vuln_entry);
  flow::Cfg cp = cfg_of(fixed, pr.patch_entry);
  MatchSet ms = match_blocks(cv, cp);

  REQUIRE_FALSE(ms.patch_region.empty());
  CHECK(ms.patch_region_lo >= cp.lo);
  CHECK(ms.patch_region_hi <= cp.hi);
  CHECK(ms.vuln_region_hi > ms.vuln_region_lo);
  // entry block is shared between the two versions
  CHECK(ms.perfect_pair(cp.entry));
  // the region spans first..last non-perfect block, nothing more
  for (const auto& p : ms.pairs) {
    if (!p.patch_start) continue;
    bool inside = *p.patch_start >= ms.patch_region_lo && *p.patch_start < ms.patch_region_hi;
    if (!p.perfect) CHECK(inside);
  }
}

TEST_CASE("single-branch thunks are followed when pairing") {
  // Vulnerable side: entry branches straight to a shared tail. Patch side:
  // entry falls through into the same tail code. The thunk must not count
  // as a differing block.
  fixture::Asm v;
  int tail_v = v.label();
  v.b(Cond::Al, tail_v);
  v.bind(tail_v);
  v.ins({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(4)}});
  v.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});

  fixture::Asm p;
  p.ins({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(4)}});
  p.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});

  elf::BinaryImage iv = images::make_image(0x10000, "f", v.assemble(0x10000));
  elf::BinaryImage ip = images::make_image(0x10000, "f", p.assemble(0x10000));
  MatchSet ms = match_blocks(cfg_of(iv, 0x10000), cfg_of(ip, 0x10000));
  CHECK(ms.patch_region.empty());
}

TEST_CASE("stripped binaries fall back to similarity matching") {
  fixture::Asm a = two_block_fn();
  elf::BinaryImage vuln =
      images::make_image(0x10000, "process", a.assemble(0x10000), {}, /*strip=*/true);
  fixture::Asm b = two_block_fn();
  elf::BinaryImage fixed = images::make_image(0x10000, "process", b.assemble(0x10000));

  CHECK_FALSE(vuln.symbol_addr("process").has_value());
  auto prs = match_functions(vuln, fixed, {"process"});
  REQUIRE(prs.size() == 1);
  CHECK(prs[0].how == FunctionPair::How::Similarity);
  CHECK(prs[0].vuln_entry == 0x10000);
  CHECK(prs[0].score > 0.9);
}

TEST_CASE("unknown function names raise FunctionNotFound") {
  fixture::Asm a = two_block_fn();
  elf::BinaryImage img = images::make_image(0x10000, "f", a.assemble(0x10000));
  try {
    (void)match_functions(img, img, {"nope"});
    FAIL("expected FunctionNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FunctionNotFound);
  }
}

TEST_SUITE_END();
