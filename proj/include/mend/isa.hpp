#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mend/error.hpp"

namespace mend::isa {

enum class Mode : uint8_t { Arm, Thumb };

enum class Mnemonic : uint8_t {
  Push, Pop,
  Mov, Movw, Movt,
  Add, Sub, Cmp,
  And, Orr, Eor,
  Lsl, Lsr,
  Ldr, Ldrb, Str, Strb,
  Adr,
  B, Bl, Blx, Bx,
  Nop, Udf,
};

enum class Cond : uint8_t {
  Eq = 0, Ne, Cs, Cc, Mi, Pl, Vs, Vc, Hi, Ls, Ge, Lt, Gt, Le, Al
};

const char* mnemonic_name(Mnemonic m);
const char* cond_name(Cond c);

// Register numbers follow the architectural encoding: r0-r12, sp=13, lr=14, pc=15.
inline constexpr uint8_t SP = 13, LR = 14, PC = 15;

struct Operand {
  enum class Kind : uint8_t {
    Reg,             // value = register number
    Imm,             // value = immediate
    PcRelTarget,     // value = absolute resolved target, disp = encoded displacement
    PcRelLoad,       // value = absolute resolved slot address, disp = encoded displacement
    RegList,         // value = bitmask over r0-r15
    ShiftedReg,      // value = register number, shift = LSL amount
  };
  Kind kind = Kind::Reg;
  uint32_t value = 0;
  int32_t disp = 0;
  uint8_t shift = 0;
  bool is_address_use = false;

  bool operator==(const Operand&) const = default;

  static Operand reg(uint8_t r) { return {Kind::Reg, r}; }
  static Operand imm(uint32_t v) { return {Kind::Imm, v}; }
  static Operand target(uint32_t abs, int32_t disp = 0) {
    return {Kind::PcRelTarget, abs, disp, 0, true};
  }
  static Operand literal(uint32_t abs, int32_t disp = 0) {
    return {Kind::PcRelLoad, abs, disp, 0, true};
  }
  static Operand reg_list(uint32_t mask) { return {Kind::RegList, mask}; }
  static Operand shifted(uint8_t r, uint8_t lsl) { return {Kind::ShiftedReg, r, 0, lsl}; }
};

// Mnemonic + operands without any placement; the encodable unit.
struct InstrSpec {
  Mnemonic mnemonic = Mnemonic::Nop;
  Cond cond = Cond::Al;
  bool set_flags = false;
  std::vector<Operand> operands;

  bool operator==(const InstrSpec&) const = default;
};

struct Instr {
  InstrSpec spec;
  uint32_t addr = 0;
  Mode mode = Mode::Thumb;
  uint8_t width = 2;  // 2 or 4
  std::array<uint8_t, 4> raw{};

  Mnemonic mnemonic() const { return spec.mnemonic; }
  const std::vector<Operand>& operands() const { return spec.operands; }
  std::string text() const;
};

// PC value the architecture exposes to an instruction at `addr`.
inline uint32_t pc_value(uint32_t addr, Mode mode) {
  return addr + (mode == Mode::Thumb ? 4 : 8);
}
// Base for pc-relative loads and adr (word-aligned PC).
inline uint32_t pc_align4(uint32_t addr, Mode mode) { return pc_value(addr, mode) & ~3u; }

Instr decode(std::span<const uint8_t> bytes, uint32_t addr, Mode mode);

// Selects the narrowest legal encoding with width >= min_width.
Instr encode(const InstrSpec& spec, uint32_t addr, Mode mode, uint8_t min_width = 0);

// Width growth when re-placing a pc-relative instruction; never negative.
uint32_t widen_delta(const Instr& old_instr, uint32_t new_addr, uint32_t new_target);

bool is_pc_relative(const InstrSpec& spec);
bool is_branch(Mnemonic m);

// Thumb permanently-undefined halfword used as trap padding (udf #0xfe).
inline constexpr uint16_t kTrapHalfword = 0xdefe;

}  // namespace mend::isa
