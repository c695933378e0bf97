#include <doctest.h>

#include "codec_space.hpp"
#include "mend/isa.hpp"

using namespace mend;
using namespace mend::isa;

namespace {

uint16_t enc16(const InstrSpec& s, uint32_t addr = 0x8000) {
  Instr i = encode(s, addr, Mode::Thumb);
  REQUIRE(i.width == 2);
  return uint16_t(i.raw[0] | (i.raw[1] << 8));
}

uint32_t enc32(const InstrSpec& s, uint32_t addr = 0x8000) {
  Instr i = encode(s, addr, Mode::Thumb, 4);
  REQUIRE(i.width == 4);
  // big-endian halfword pair, as conventionally printed
  return (uint32_t(i.raw[0] | (i.raw[1] << 8)) << 16) | uint32_t(i.raw[2] | (i.raw[3] << 8));
}

}  // namespace

TEST_SUITE_BEGIN("isa");

TEST_CASE("hand-assembled thumb encodings") {
  CHECK(enc16({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(0)}}) == 0x2000);
  CHECK(enc16({Mnemonic::Mov, Cond::Al, true, {Operand::reg(3), Operand::imm(0x2a)}}) == 0x232a);
  CHECK(enc16({Mnemonic::Push, Cond::Al, false, {Operand::reg_list(0x4010)}}) == 0xb510);
  CHECK(enc16({Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(0x8010)}}) == 0xbd10);
  CHECK(enc16({Mnemonic::Bx, Cond::Al, false, {Operand::reg(LR)}}) == 0x4770);
  CHECK(enc16({Mnemonic::Blx, Cond::Al, false, {Operand::reg(3)}}) == 0x4798);
  CHECK(enc16({Mnemonic::Cmp, Cond::Al, true, {Operand::reg(0), Operand::imm(0xff)}}) == 0x28ff);
  CHECK(enc16({Mnemonic::Nop, Cond::Al, false, {}}) == 0xbf00);
  CHECK(enc16({Mnemonic::Udf, Cond::Al, false, {Operand::imm(0xfe)}}) == kTrapHalfword);
  // add r1, pc
  CHECK(enc16({Mnemonic::Add, Cond::Al, false, {Operand::reg(1), Operand::reg(PC)}}) == 0x4479);
  // ldr r1, [pc, #8] at 0x8000: target = 0x8004 + 8
  CHECK(enc16({Mnemonic::Ldr, Cond::Al, false, {Operand::reg(1), Operand::literal(0x800c)}}) ==
        0x4902);
  // str r2, [sp, #12] / ldr r2, [r1, #4]
  CHECK(enc16({Mnemonic::Str, Cond::Al, false,
               {Operand::reg(2), Operand::reg(SP), Operand::imm(12)}}) == 0x9203);
  CHECK(enc16({Mnemonic::Ldr, Cond::Al, false,
               {Operand::reg(2), Operand::reg(1), Operand::imm(4)}}) == 0x684a);
  // beq at 0x8000 to 0x8010: imm8 = (0x8010 - 0x8004) / 2
  CHECK(enc16({Mnemonic::B, Cond::Eq, false, {Operand::target(0x8010)}}) == 0xd006);
  // b .-2 at 0x8000 (target 0x7ffe): off = -6
  CHECK(enc16({Mnemonic::B, Cond::Al, false, {Operand::target(0x7ffe)}}) == 0xe7fd);
  // bl with zero displacement: off = 0 -> f000 f800
  CHECK(enc32({Mnemonic::Bl, Cond::Al, false, {Operand::target(0x8004)}}) == 0xf000f800);
  // movw r4, #0x1234 -> f241 2434
  CHECK(enc32({Mnemonic::Movw, Cond::Al, false, {Operand::reg(4), Operand::imm(0x1234)}}) ==
        0xf2412434);
  // movt r4, #0xffff -> f6cf 74ff
  CHECK(enc32({Mnemonic::Movt, Cond::Al, false, {Operand::reg(4), Operand::imm(0xffff)}}) ==
        0xf6cf74ff);
}

TEST_CASE("narrowest-width selection and min_width floor") {
  InstrSpec movs{Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(1)}};
  CHECK(encode(movs, 0x8000, Mode::Thumb).width == 2);
  CHECK_THROWS_AS(encode(movs, 0x8000, Mode::Thumb, 4), Error);  // no wide form in subset

  InstrSpec b{Mnemonic::B, Cond::Eq, false, {Operand::target(0x8050)}};
  CHECK(encode(b, 0x8000, Mode::Thumb).width == 2);
  CHECK(encode(b, 0x8000, Mode::Thumb, 4).width == 4);  // never narrows below the floor
  InstrSpec far_b{Mnemonic::B, Cond::Eq, false, {Operand::target(0x9000)}};
  CHECK(encode(far_b, 0x8000, Mode::Thumb).width == 4);  // out of 16-bit reach
}

TEST_CASE("widen_delta") {
  Instr narrow = encode({Mnemonic::B, Cond::Eq, false, {Operand::target(0x8050)}},
                        0x8000, Mode::Thumb);
  CHECK(narrow.width == 2);
  CHECK(widen_delta(narrow, 0x8000, 0x8050) == 0);
  CHECK(widen_delta(narrow, 0x8000, 0x9000) == 2);   // out of cond-T1 reach
  CHECK(widen_delta(narrow, 0x20000, 0x8050) == 2);  // moved far from the target

  Instr wide = encode({Mnemonic::B, Cond::Eq, false, {Operand::target(0x9000)}},
                      0x8000, Mode::Thumb);
  CHECK(wide.width == 4);
  CHECK(widen_delta(wide, 0x8000, 0x8050) == 0);  // never narrows

  Instr mov = encode({Mnemonic::Mov, Cond::Al, true, {Operand::reg(0), Operand::imm(1)}},
                     0x8000, Mode::Thumb);
  CHECK_THROWS_AS(widen_delta(mov, 0x9000, 0x9000), Error);
}

TEST_CASE("decode rejections") {
  auto dec = [](std::vector<uint8_t> b, uint32_t addr, Mode m) {
    return decode(std::span<const uint8_t>(b.data(), b.size()), addr, m);
  };
  CHECK_THROWS_AS(dec({0x2d, 0xe9}, 0x8000, Mode::Thumb), Error);  // truncated thumb32
  CHECK_THROWS_AS(dec({0x00, 0xbf}, 0x8001, Mode::Thumb), Error);  // odd address
  CHECK_THROWS_AS(dec({0x00, 0x00, 0x00, 0x00}, 0x8002, Mode::Arm), Error);  // misaligned
  CHECK(dec({0xfe, 0xde}, 0x8000, Mode::Thumb).mnemonic() == Mnemonic::Udf);  // trap halfword
}

TEST_CASE("branch range errors are typed") {
  InstrSpec b{Mnemonic::B, Cond::Eq, false, {Operand::target(0x8000 + (1 << 22))}};
  try {
    encode(b, 0x8000, Mode::Thumb);
    FAIL("expected OutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfRange);
  }
  InstrSpec odd{Mnemonic::B, Cond::Al, false, {Operand::target(0x8051)}};
  try {
    encode(odd, 0x8000, Mode::Thumb);
    FAIL("expected Misaligned");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Misaligned);
  }
}

TEST_CASE("exhaustive decode-encode identity over the template space") {
  codec_space::Stats st = codec_space::run_all();
  CHECK(st.checked > 100000);   // full legal field space, strided where huge
  CHECK(st.checked < 10000000);
  for (const auto& f : st.failures) MESSAGE(f);
  CHECK(st.failures.empty());
}

TEST_SUITE_END();
