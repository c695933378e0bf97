#include <doctest.h>

#include "images.hpp"
#include "mend/interp.hpp"

using namespace mend;
using namespace mend::interp;
using isa::Cond;
using isa::Mnemonic;
using isa::Operand;

TEST_SUITE_BEGIN("interp");

TEST_CASE("straight-line arithmetic") {
  fixture::Asm a;
  a.ins({Mnemonic::Add, Cond::Al, true, {Operand::reg(0), Operand::reg(1), Operand::imm(5)}});
  a.ins({Mnemonic::Lsl, Cond::Al, true, {Operand::reg(0), Operand::reg(0), Operand::imm(1)}});
  a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
  elf::BinaryImage img = images::make_image(0x10000, "f", a.assemble(0x10000));

  TestVector vec;
  vec.name = "arith";
  vec.entry = 0x10000;
  vec.regs = {{1, 37}, {14, kReturnSentinel}};
  MachineState st = interpret(img, vec);
  CHECK(st.regs[0] == (37 + 5) * 2);
}

TEST_CASE("conditional flow and flags") {
  fixture::Asm a;
  int big = a.label();
  a.ins({Mnemonic::Cmp, Cond::Al, true, {Operand::reg(0), Operand::imm(10)}});
  a.b(Cond::Hi, big);
  a.ins({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(0)}});
  a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
  a.bind(big);
  a.ins({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(1)}});
  a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
  elf::BinaryImage img = images::make_image(0x10000, "f", a.assemble(0x10000));

  TestVector vec;
  vec.entry = 0x10000;
  vec.regs = {{0, 5}, {14, kReturnSentinel}};
  CHECK(interpret(img, vec).regs[0] == 0);
  vec.regs[0] = 11;
  CHECK(interpret(img, vec).regs[0] == 1);
  vec.regs[0] = 10;  // hi is unsigned strictly-greater
  CHECK(interpret(img, vec).regs[0] == 0);
}

TEST_CASE("memory store visible through symbol outputs") {
  fixture::Asm a;
  int lit = a.lit(0);
  a.ldr_lit(2, lit);
  a.ins({Mnemonic::Str, Cond::Al, false,
         {Operand::reg(1), Operand::reg(2), Operand::imm(0)}});
  a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
  std::vector<uint8_t> code = a.assemble(0x10000);
  uint32_t g = images::data_base(0x10000, code);
  a.set_lit(lit, g);
  code = a.assemble(0x10000);
  elf::BinaryImage img = images::make_image(0x10000, "f", code, {{"g", {0}}});

  TestVector vec;
  vec.entry = 0x10000;
  vec.regs = {{1, 0xc0ffee}, {14, kReturnSentinel}};
  vec.out_syms = {"g"};
  Outcome out = run_outcome(img, vec);
  CHECK_FALSE(out.faulted);
  REQUIRE(out.out_globals.count("g"));
  CHECK(out.out_globals.at("g") == 0xc0ffee);
}

TEST_CASE("trap halfword faults as undefined instruction") {
  elf::BinaryImage img = images::make_image(0x10000, "f", {0xfe, 0xde});
  TestVector vec;
  vec.entry = 0x10000;
  vec.regs = {{14, kReturnSentinel}};
  Outcome out = run_outcome(img, vec);
  CHECK(out.faulted);
  CHECK(out.fault == Errc::UndefinedInstruction);
}

TEST_CASE("fuel bounds execution") {
  fixture::Asm a;
  int self = a.label();
  a.bind(self);
  a.b(Cond::Al, self);
  elf::BinaryImage img = images::make_image(0x10000, "f", a.assemble(0x10000));
  TestVector vec;
  vec.entry = 0x10000;
  vec.fuel = 64;
  vec.regs = {{14, kReturnSentinel}};
  Outcome out = run_outcome(img, vec);
  CHECK(out.faulted);
  CHECK(out.fault == Errc::FuelExhausted);
}

TEST_CASE("differential check flags divergent behavior") {
  auto build = [](uint32_t ret) {
    fixture::Asm a;
    a.ins({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(ret)}});
    a.ins({Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}});
    return images::make_image(0x10000, "f", a.assemble(0x10000));
  };
  elf::BinaryImage one = build(1), two = build(2);

  TestVector vec;
  vec.name = "ret";
  vec.entry = 0x10000;
  vec.regs = {{14, kReturnSentinel}};
  vec.out_regs = {0};

  auto same = differential_check(one, one, {vec});
  REQUIRE(same.size() == 1);
  CHECK(same[0].pass);
  auto diff = differential_check(one, two, {vec});
  REQUIRE(diff.size() == 1);
  CHECK_FALSE(diff[0].pass);
}

TEST_SUITE_END();
