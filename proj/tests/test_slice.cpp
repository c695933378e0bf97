#include <doctest.h>

#include <random>

#include "affine_cases.hpp"
#include "images.hpp"
#include "mend/flow.hpp"
#include "mend/slice.hpp"

using namespace mend;
using namespace mend::slice;
using isa::Cond;
using isa::InstrSpec;
using isa::Mnemonic;
using isa::Operand;

namespace {

EquationSystem lit_plus_pc(uint32_t pc_const, uint32_t required) {
  EquationSystem sys;
  sys.equations.push_back({1, IrStmt::Op::Load, {IrOperand::slot(0x1014)}});
  sys.equations.push_back(
      {2, IrStmt::Op::IntAdd, {IrOperand::var(1), IrOperand::constant(pc_const)}});
  sys.target_var = 2;
  sys.required = required;
  return sys;
}

}  // namespace

TEST_SUITE_BEGIN("slice");

TEST_CASE("literal-plus-pc solves to target minus pc") {
  // ldr r1, <slot>; add r1, pc placed so the pc reads 0x1010; r1 must name 0x2500
  SolveResult r = solve(lit_plus_pc(0x1010, 0x2500));
  REQUIRE(r.assignments.size() == 1);
  CHECK(r.assignments[0].first == flow::MemLoc::global(0x1014));
  CHECK(r.assignments[0].second == 0x14f0);

  // same instruction placed so the pc reads 0x1310
  SolveResult moved = solve(lit_plus_pc(0x1310, 0x2500));
  REQUIRE(moved.assignments.size() == 1);
  CHECK(moved.assignments[0].second == 0x11f0);
}

TEST_CASE("solver failure modes are typed") {
  EquationSystem two_slots;
  two_slots.equations.push_back(
      {1, IrStmt::Op::IntAdd, {IrOperand::slot(0x100), IrOperand::slot(0x104)}});
  two_slots.target_var = 1;
  two_slots.required = 5;
  CHECK_THROWS_AS((void)solve(two_slots), Error);
  try {
    (void)solve(two_slots);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Underdetermined);
  }

  EquationSystem parity;  // 2*slot == odd has no solution mod 2^32
  parity.equations.push_back(
      {1, IrStmt::Op::IntAdd, {IrOperand::slot(0x100), IrOperand::slot(0x100)}});
  parity.target_var = 1;
  parity.required = 3;
  try {
    (void)solve(parity);
    FAIL("expected Inconsistent");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Inconsistent);
  }

  EquationSystem constant_only;
  constant_only.equations.push_back({1, IrStmt::Op::Copy, {IrOperand::constant(9)}});
  constant_only.target_var = 1;
  constant_only.required = 9;
  CHECK(solve(constant_only).assignments.empty());  // satisfied without any slot
  constant_only.required = 10;
  try {
    (void)solve(constant_only);
    FAIL("expected Inconsistent");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Inconsistent);
  }
}

TEST_CASE("build_equations rejects unsupported operations") {
  Slice s;
  isa::Instr dummy;
  s.stmts.push_back({dummy, {{IrStmt::Op::Other, 1, {IrOperand::constant(0)}}}});
  s.target_var = 1;
  try {
    (void)build_equations(s, 0);
    FAIL("expected NonAffine");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonAffine);
  }
}

TEST_CASE("backward slice through a pc-relative address construction") {
  // 0x1000 push, 0x1002 nop, 0x1004 ldr r1,<pool>, 0x1006-0x100a nops,
  // 0x100c add r1,pc (pc=0x1010), 0x100e ldr r0,[r1], 0x1010 pop, pool 0x1014
  fixture::Asm a;
  a.ins({Mnemonic::Push, Cond::Al, false, {Operand::reg_list(0x4010)}});
  a.ins({Mnemonic::Nop, Cond::Al, false, {}});
  int lit = a.lit(0);
  a.ldr_lit(1, lit);
  for (int i = 0; i < 3; ++i) a.ins({Mnemonic::Nop, Cond::Al, false, {}});
  a.ins({Mnemonic::Add, Cond::Al, false, {Operand::reg(1), Operand::reg(isa::PC)}});
  a.ins({Mnemonic::Ldr, Cond::Al, false,
         {Operand::reg(0), Operand::reg(1), Operand::imm(0)}});
  a.ins({Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(0x8010)}});
  a.set_lit(lit, 0x2500 - 0x1010);
  std::vector<uint8_t> code = a.assemble(0x1000);
  REQUIRE(a.lit_addr(lit) == 0x1014);

  fixture::ElfBuilder eb(0x1000);
  eb.begin_section(".text");
  eb.thumb_at(0x1000);
  eb.func_symbol("f", 0x1000);
  eb.bytes(code);
  eb.bytes(std::vector<uint8_t>(0x2500 - eb.here(), 0));
  eb.begin_section(".data");
  eb.obj_symbol("g", eb.here());
  eb.word(0x1234);
  elf::BinaryImage img = elf::BinaryImage::from_bytes(eb.build());

  flow::Cfg cfg = flow::build_cfg(img, 0x1000, isa::Mode::Thumb);
  flow::Dfg dfg = flow::build_dfg(img, cfg);
  auto refs = flow::extract_references(img, cfg, dfg);

  const flow::Reference* data = nullptr;
  for (const auto& r : refs)
    if (r.kind == flow::Reference::Kind::Data) data = &r;
  REQUIRE(data != nullptr);
  CHECK(data->memloc == flow::MemLoc::global(0x2500));
  CHECK(data->src == 0x100c);
  CHECK(data->dst == 0x100e);

  SUBCASE("unmoved placement reproduces the stored word") {
    Slice s = backward_slice(img, cfg, dfg, *data, {});
    SolveResult r = solve(build_equations(s, 0x2500));
    REQUIRE(r.assignments.size() == 1);
    CHECK(r.assignments[0].first == flow::MemLoc::global(0x1014));
    CHECK(r.assignments[0].second == img.read_u32(0x1014));
    CHECK(r.assignments[0].second == 0x14f0);
  }
  SUBCASE("moved placement compensates for the new pc") {
    std::map<uint32_t, uint32_t> placement{{0x100c, 0x130c}};
    Slice s = backward_slice(img, cfg, dfg, *data, placement);
    SolveResult r = solve(build_equations(s, 0x2500));
    REQUIRE(r.assignments.size() == 1);
    CHECK(r.assignments[0].second == 0x2500 - 0x1310);
  }
}

TEST_CASE("random affine chains validated by forward evaluation") {
  std::mt19937 rng(0xa11ce);
  int solved = 0;
  for (int i = 0; i < 1000; ++i) {
    affine_cases::Case c = affine_cases::random_case(rng);
    SolveResult r = solve(c.sys);
    REQUIRE(r.assignments.size() == 1);
    CHECK(r.assignments[0].first == flow::MemLoc::global(c.slot));
    uint32_t got = affine_cases::evaluate(c.sys, r.assignments[0].second);
    if (got != c.sys.required) {
      CAPTURE(i);
      CHECK(got == c.sys.required);
    }
    ++solved;
  }
  CHECK(solved == 1000);
}

TEST_SUITE_END();
