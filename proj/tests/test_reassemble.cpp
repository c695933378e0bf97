#include <doctest.h>

#include "images.hpp"
#include "mend/corpus.hpp"
#include "mend/pipeline.hpp"
#include "mend/reassemble.hpp"

using namespace mend;
using namespace mend::reassemble;
using isa::Cond;
using isa::Mnemonic;
using isa::Operand;

TEST_SUITE_BEGIN("reassemble");

TEST_CASE("load_data_from stops at the terminating double null") {
  fixture::ElfBuilder eb(0x10000);
  eb.begin_section(".text");
  eb.bytes({0x00, 0xbf});
  eb.align(4);
  eb.begin_section(".rodata");
  uint32_t s = eb.cstr("hi");
  elf::BinaryImage img = elf::BinaryImage::from_bytes(eb.build());

  std::vector<uint8_t> got = load_data_from(img, s);
  REQUIRE(got.size() >= 3);
  CHECK(got[0] == 'h');
  CHECK(got[1] == 'i');
  CHECK(got.back() == 0);
  CHECK(got.size() <= 4);
}

TEST_CASE("retarget_branch re-points without changing width") {
  fixture::Asm a;
  a.ins({Mnemonic::Nop, Cond::Al, false, {}});
  a.bl(0x10800);
  a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
  std::vector<uint8_t> code = a.assemble(0x10000);
  elf::BinaryImage img = images::make_image(0x10000, "f", code);

  uint32_t call_at = 0x10002;
  img.allow_edits(call_at, 4);
  retarget_branch(img, call_at, isa::Mode::Thumb, 0x10400);

  isa::Instr after = isa::decode(img.view(call_at, 4), call_at, isa::Mode::Thumb);
  CHECK(after.mnemonic() == Mnemonic::Bl);
  CHECK(after.width == 4);
  REQUIRE(after.operands().size() == 1);
  CHECK(after.operands()[0].value == 0x10400);
}

TEST_CASE("redirect branch and trap fill over the replaced bytes") {
  auto cases = corpus::generate_corpus(41, 1);
  const auto& c = cases[0];
  std::string dir = images::scratch_dir("reasm-redirect");
  pipeline::Options opt;
  opt.vuln_path = images::write_file(dir, "vuln.elf", c.vuln_elf);
  opt.fixed_path = images::write_file(dir, "fixed.elf", c.fixed_elf);
  opt.out_path = dir + "/patched.elf";
  opt.functions = c.affected;
  pipeline::PatchReport rep = pipeline::run_patch(opt);
  REQUIRE(rep.ok);
  const auto& fr = rep.functions.at(0);
  REQUIRE(fr.status == "patched");

  elf::BinaryImage patched = elf::BinaryImage::load(opt.out_path);

  // the replaced interval starts with an unconditional branch into the region
  isa::Instr redir = isa::decode(patched.view(fr.redirect_at, 4), fr.redirect_at,
                                 isa::Mode::Thumb);
  CHECK(redir.mnemonic() == Mnemonic::B);
  CHECK(redir.spec.cond == Cond::Al);
  REQUIRE(redir.operands().size() == 1);
  CHECK(redir.operands()[0].value == fr.redirect_to);
  CHECK(fr.redirect_to >= rep.region_vaddr);
  CHECK(fr.redirect_to < rep.region_vaddr + rep.region_size);

  // everything after it up to replaced_hi is trap halfwords
  for (uint32_t at = fr.redirect_at + redir.width; at + 1 < fr.replaced_hi; at += 2) {
    uint16_t hw = uint16_t(patched.read(at, 1)[0] | (patched.read(at + 1, 1)[0] << 8));
    CHECK(hw == isa::kTrapHalfword);
  }
}

TEST_CASE("widening produces ledger entries with even deltas") {
  auto cases = corpus::generate_corpus(43, 4);
  const corpus::CorpusCase* widening = nullptr;
  for (const auto& c : cases)
    if (c.tmpl == "widening-stressor") widening = &c;
  REQUIRE(widening != nullptr);

  std::string dir = images::scratch_dir("reasm-widening");
  pipeline::Options opt;
  opt.vuln_path = images::write_file(dir, "vuln.elf", widening->vuln_elf);
  opt.fixed_path = images::write_file(dir, "fixed.elf", widening->fixed_elf);
  opt.out_path = dir + "/patched.elf";
  opt.functions = widening->affected;
  pipeline::PatchReport rep = pipeline::run_patch(opt);
  REQUIRE(rep.ok);
  const auto& fr = rep.functions.at(0);
  REQUIRE(fr.status == "patched");

  REQUIRE(!fr.shifts.empty());
  for (const auto& s : fr.shifts) {
    CHECK(s.delta % 2 == 0);
    CHECK(s.delta > 0);
    CHECK(s.at >= rep.region_vaddr);
    CHECK(s.cause >= fr.patch_entry);
  }
  CHECK(!fr.data_slots.empty());  // literal pool words relocated into the region

  // relocated literal loads point at their relocated slots
  elf::BinaryImage patched = elf::BinaryImage::load(opt.out_path);
  elf::BinaryImage fixed = elf::BinaryImage::from_bytes(widening->fixed_elf);
  for (const auto& [from, to] : fr.data_slots) {
    CHECK(to >= rep.region_vaddr);
    CHECK(patched.read_u32(to) == fixed.read_u32(from));
  }
}

TEST_CASE("whole-function emission places patch-only helpers") {
  auto cases = corpus::generate_corpus(47, 5);
  const corpus::CorpusCase* helper_case = nullptr;
  for (const auto& c : cases)
    if (c.tmpl == "patch-only-helper") helper_case = &c;
  REQUIRE(helper_case != nullptr);

  std::string dir = images::scratch_dir("reasm-helper");
  pipeline::Options opt;
  opt.vuln_path = images::write_file(dir, "vuln.elf", helper_case->vuln_elf);
  opt.fixed_path = images::write_file(dir, "fixed.elf", helper_case->fixed_elf);
  opt.out_path = dir + "/patched.elf";
  opt.functions = helper_case->affected;
  pipeline::PatchReport rep = pipeline::run_patch(opt);
  REQUIRE(rep.ok);
  const auto& fr = rep.functions.at(0);
  REQUIRE(fr.status == "patched");
  REQUIRE(!fr.helpers.empty());
  for (const auto& [name, at] : fr.helpers) {
    CHECK(at >= rep.region_vaddr);
    CHECK(at < rep.region_vaddr + rep.region_size);
  }
}

TEST_SUITE_END();
