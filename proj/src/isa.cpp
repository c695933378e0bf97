#include "mend/isa.hpp"

#include <cstdio>

namespace mend::isa {

namespace {

uint16_t rd16(std::span<const uint8_t> b, size_t off) {
  return uint16_t(b[off] | (b[off + 1] << 8));
}

uint32_t rd32(std::span<const uint8_t> b, size_t off) {
  return uint32_t(b[off]) | (uint32_t(b[off + 1]) << 8) | (uint32_t(b[off + 2]) << 16) |
         (uint32_t(b[off + 3]) << 24);
}

int32_t sext(uint32_t v, unsigned bits) {
  uint32_t m = 1u << (bits - 1);
  return int32_t((v ^ m) - m);
}

uint32_t ror32(uint32_t v, unsigned n) {
  n &= 31;
  return n ? ((v >> n) | (v << (32 - n))) : v;
}

Instr make(InstrSpec spec, uint32_t addr, Mode mode, uint32_t enc, uint8_t width) {
  Instr i;
  i.spec = std::move(spec);
  i.addr = addr;
  i.mode = mode;
  i.width = width;
  if (mode == Mode::Thumb) {
    if (width == 2) {
      i.raw = {uint8_t(enc), uint8_t(enc >> 8), 0, 0};
    } else {
      // two little-endian halfwords, first halfword first
      uint16_t hw1 = uint16_t(enc >> 16), hw2 = uint16_t(enc);
      i.raw = {uint8_t(hw1), uint8_t(hw1 >> 8), uint8_t(hw2), uint8_t(hw2 >> 8)};
    }
  } else {
    i.raw = {uint8_t(enc), uint8_t(enc >> 8), uint8_t(enc >> 16), uint8_t(enc >> 24)};
  }
  return i;
}

bool low_reg(uint32_t r) { return r < 8; }

// ---------------------------------------------------------------------------
// Thumb decode

Instr decode_thumb16(uint16_t hw, uint32_t addr) {
  auto mk = [&](InstrSpec s) { return make(std::move(s), addr, Mode::Thumb, hw, 2); };
  auto op3 = [&](Mnemonic m, uint8_t a, uint8_t b, Operand c, bool sf = true) {
    return mk({m, Cond::Al, sf, {Operand::reg(a), Operand::reg(b), c}});
  };

  uint32_t top5 = hw >> 11;
  switch (top5) {
    case 0b00000: {  // lsl imm (imm 0 => movs reg)
      uint8_t rd = hw & 7, rm = (hw >> 3) & 7, imm = (hw >> 6) & 31;
      if (imm == 0)
        return mk({Mnemonic::Mov, Cond::Al, true, {Operand::reg(rd), Operand::reg(rm)}});
      return op3(Mnemonic::Lsl, rd, rm, Operand::imm(imm));
    }
    case 0b00001: {  // lsr imm (imm 0 => 32)
      uint8_t rd = hw & 7, rm = (hw >> 3) & 7, imm = (hw >> 6) & 31;
      return op3(Mnemonic::Lsr, rd, rm, Operand::imm(imm ? imm : 32));
    }
    case 0b00011: {  // add/sub reg or imm3
      uint8_t rd = hw & 7, rn = (hw >> 3) & 7, x = (hw >> 6) & 7;
      Mnemonic m = (hw & 0x0200) ? Mnemonic::Sub : Mnemonic::Add;
      Operand o = (hw & 0x0400) ? Operand::imm(x) : Operand::reg(x);
      return op3(m, rd, rn, o);
    }
    case 0b00100: {  // movs rd, #imm8
      return mk({Mnemonic::Mov, Cond::Al, true,
                 {Operand::reg((hw >> 8) & 7), Operand::imm(hw & 0xff)}});
    }
    case 0b00101: {  // cmp rn, #imm8
      return mk({Mnemonic::Cmp, Cond::Al, true,
                 {Operand::reg((hw >> 8) & 7), Operand::imm(hw & 0xff)}});
    }
    case 0b00110:  // adds rdn, #imm8
      return mk({Mnemonic::Add, Cond::Al, true,
                 {Operand::reg((hw >> 8) & 7), Operand::imm(hw & 0xff)}});
    case 0b00111:  // subs rdn, #imm8
      return mk({Mnemonic::Sub, Cond::Al, true,
                 {Operand::reg((hw >> 8) & 7), Operand::imm(hw & 0xff)}});
    case 0b01001: {  // ldr rt, [pc, #imm8*4]
      uint32_t off = (hw & 0xff) * 4;
      uint32_t target = pc_align4(addr, Mode::Thumb) + off;
      return mk({Mnemonic::Ldr, Cond::Al, false,
                 {Operand::reg((hw >> 8) & 7), Operand::literal(target, int32_t(off))}});
    }
    case 0b10010:  // str rt, [sp, #imm8*4]
      return op3(Mnemonic::Str, (hw >> 8) & 7, SP, Operand::imm((hw & 0xff) * 4), false);
    case 0b10011:  // ldr rt, [sp, #imm8*4]
      return op3(Mnemonic::Ldr, (hw >> 8) & 7, SP, Operand::imm((hw & 0xff) * 4), false);
    case 0b10100: {  // adr rd, label
      uint32_t off = (hw & 0xff) * 4;
      uint32_t target = pc_align4(addr, Mode::Thumb) + off;
      return mk({Mnemonic::Adr, Cond::Al, false,
                 {Operand::reg((hw >> 8) & 7), Operand::literal(target, int32_t(off))}});
    }
    case 0b11100: {  // b (T2)
      int32_t off = sext(uint32_t(hw & 0x7ff) << 1, 12);
      uint32_t target = pc_value(addr, Mode::Thumb) + uint32_t(off);
      return mk({Mnemonic::B, Cond::Al, false, {Operand::target(target, off)}});
    }
    default: break;
  }

  if ((hw & 0xfc00) == 0x4000) {  // alu group
    uint8_t op = (hw >> 6) & 0xf, rm = (hw >> 3) & 7, rdn = hw & 7;
    switch (op) {
      case 0b0000:
        return make({Mnemonic::And, Cond::Al, true, {Operand::reg(rdn), Operand::reg(rm)}},
                    addr, Mode::Thumb, hw, 2);
      case 0b0001:
        return make({Mnemonic::Eor, Cond::Al, true, {Operand::reg(rdn), Operand::reg(rm)}},
                    addr, Mode::Thumb, hw, 2);
      case 0b1010:
        return make({Mnemonic::Cmp, Cond::Al, true, {Operand::reg(rdn), Operand::reg(rm)}},
                    addr, Mode::Thumb, hw, 2);
      case 0b1100:
        return make({Mnemonic::Orr, Cond::Al, true, {Operand::reg(rdn), Operand::reg(rm)}},
                    addr, Mode::Thumb, hw, 2);
      default:
        fail(Errc::UnknownEncoding, "thumb alu op " + hex(hw) + " at " + hex(addr));
    }
  }

  if ((hw & 0xff00) == 0x4400) {  // add rdn, rm (high regs allowed)
    uint8_t rdn = uint8_t(((hw >> 4) & 8) | (hw & 7)), rm = (hw >> 3) & 0xf;
    return make({Mnemonic::Add, Cond::Al, false, {Operand::reg(rdn), Operand::reg(rm)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xff00) == 0x4600) {  // mov rd, rm (high regs allowed)
    uint8_t rd = uint8_t(((hw >> 4) & 8) | (hw & 7)), rm = (hw >> 3) & 0xf;
    return make({Mnemonic::Mov, Cond::Al, false, {Operand::reg(rd), Operand::reg(rm)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xff87) == 0x4700)  // bx rm
    return make({Mnemonic::Bx, Cond::Al, false, {Operand::reg((hw >> 3) & 0xf)}},
                addr, Mode::Thumb, hw, 2);
  if ((hw & 0xff87) == 0x4780)  // blx rm
    return make({Mnemonic::Blx, Cond::Al, false, {Operand::reg((hw >> 3) & 0xf)}},
                addr, Mode::Thumb, hw, 2);

  if ((hw & 0xf000) == 0x5000) {  // load/store register offset
    uint8_t op = (hw >> 9) & 7, rm = (hw >> 6) & 7, rn = (hw >> 3) & 7, rt = hw & 7;
    Mnemonic m;
    switch (op) {
      case 0b000: m = Mnemonic::Str; break;
      case 0b010: m = Mnemonic::Strb; break;
      case 0b100: m = Mnemonic::Ldr; break;
      case 0b110: m = Mnemonic::Ldrb; break;
      default: fail(Errc::UnknownEncoding, "thumb ldst reg op at " + hex(addr));
    }
    return make({m, Cond::Al, false, {Operand::reg(rt), Operand::reg(rn), Operand::reg(rm)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xf000) == 0x6000) {  // ldr/str imm5*4
    uint8_t rt = hw & 7, rn = (hw >> 3) & 7, imm = (hw >> 6) & 31;
    Mnemonic m = (hw & 0x0800) ? Mnemonic::Ldr : Mnemonic::Str;
    return make({m, Cond::Al, false,
                 {Operand::reg(rt), Operand::reg(rn), Operand::imm(uint32_t(imm) * 4)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xf000) == 0x7000) {  // ldrb/strb imm5
    uint8_t rt = hw & 7, rn = (hw >> 3) & 7, imm = (hw >> 6) & 31;
    Mnemonic m = (hw & 0x0800) ? Mnemonic::Ldrb : Mnemonic::Strb;
    return make({m, Cond::Al, false, {Operand::reg(rt), Operand::reg(rn), Operand::imm(imm)}},
                addr, Mode::Thumb, hw, 2);
  }

  if ((hw & 0xff00) == 0xb000) {  // add/sub sp, #imm7*4
    uint32_t imm = (hw & 0x7f) * 4;
    Mnemonic m = (hw & 0x80) ? Mnemonic::Sub : Mnemonic::Add;
    return make({m, Cond::Al, false, {Operand::reg(SP), Operand::imm(imm)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xfe00) == 0xb400) {  // push
    uint32_t list = (hw & 0xff) | ((hw & 0x100) ? (1u << LR) : 0);
    return make({Mnemonic::Push, Cond::Al, false, {Operand::reg_list(list)}},
                addr, Mode::Thumb, hw, 2);
  }
  if ((hw & 0xfe00) == 0xbc00) {  // pop
    uint32_t list = (hw & 0xff) | ((hw & 0x100) ? (1u << PC) : 0);
    return make({Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(list)}},
                addr, Mode::Thumb, hw, 2);
  }
  if (hw == 0xbf00)
    return make({Mnemonic::Nop, Cond::Al, false, {}}, addr, Mode::Thumb, hw, 2);

  if ((hw & 0xff00) == 0xde00)  // udf #imm8
    return make({Mnemonic::Udf, Cond::Al, false, {Operand::imm(hw & 0xff)}},
                addr, Mode::Thumb, hw, 2);
  if ((hw & 0xf000) == 0xd000) {  // b<cond> (T1); cond 0xe/0xf excluded above/svc
    uint8_t cc = (hw >> 8) & 0xf;
    if (cc < 14) {
      int32_t off = sext(uint32_t(hw & 0xff) << 1, 9);
      uint32_t target = pc_value(addr, Mode::Thumb) + uint32_t(off);
      return make({Mnemonic::B, Cond(cc), false, {Operand::target(target, off)}},
                  addr, Mode::Thumb, hw, 2);
    }
  }

  fail(Errc::UnknownEncoding, "thumb16 " + hex(hw) + " at " + hex(addr));
}

Instr decode_thumb32(uint16_t hw1, uint16_t hw2, uint32_t addr) {
  uint32_t enc = (uint32_t(hw1) << 16) | hw2;
  auto mk = [&](InstrSpec s) { return make(std::move(s), addr, Mode::Thumb, enc, 4); };

  if ((hw1 & 0xf800) == 0xf000 && (hw2 & 0x8000) == 0x8000) {
    // branches and misc control
    uint32_t s = (hw1 >> 10) & 1, j1 = (hw2 >> 13) & 1, j2 = (hw2 >> 11) & 1;
    uint32_t imm11 = hw2 & 0x7ff;
    if ((hw2 & 0x5000) == 0x0000) {  // b<cond> T3
      uint8_t cc = (hw1 >> 6) & 0xf;
      if (cc >= 14) fail(Errc::UnknownEncoding, "thumb32 control " + hex(enc));
      uint32_t imm6 = hw1 & 0x3f;
      int32_t off = sext((s << 20) | (j2 << 19) | (j1 << 18) | (imm6 << 12) | (imm11 << 1), 21);
      uint32_t target = pc_value(addr, Mode::Thumb) + uint32_t(off);
      return mk({Mnemonic::B, Cond(cc), false, {Operand::target(target, off)}});
    }
    uint32_t i1 = (~(j1 ^ s)) & 1, i2 = (~(j2 ^ s)) & 1;
    uint32_t imm10 = hw1 & 0x3ff;
    if ((hw2 & 0x5000) == 0x1000) {  // b T4
      int32_t off = sext((s << 24) | (i1 << 23) | (i2 << 22) | (imm10 << 12) | (imm11 << 1), 25);
      uint32_t target = pc_value(addr, Mode::Thumb) + uint32_t(off);
      return mk({Mnemonic::B, Cond::Al, false, {Operand::target(target, off)}});
    }
    if ((hw2 & 0x5000) == 0x5000) {  // bl T1
      int32_t off = sext((s << 24) | (i1 << 23) | (i2 << 22) | (imm10 << 12) | (imm11 << 1), 25);
      uint32_t target = pc_value(addr, Mode::Thumb) + uint32_t(off);
      return mk({Mnemonic::Bl, Cond::Al, false, {Operand::target(target, off)}});
    }
    // blx T2 (target is ARM code)
    if ((hw2 & 0x5001) == 0x4000) {
      uint32_t imm10l = (hw2 >> 1) & 0x3ff;
      int32_t off = sext((s << 24) | (i1 << 23) | (i2 << 22) | (imm10 << 12) | (imm10l << 2), 25);
      uint32_t target = pc_align4(addr, Mode::Thumb) + uint32_t(off);
      return mk({Mnemonic::Blx, Cond::Al, false, {Operand::target(target, off)}});
    }
    fail(Errc::UnknownEncoding, "thumb32 control " + hex(enc));
  }

  if ((hw1 & 0xf800) == 0xf000 && (hw2 & 0x8000) == 0) {
    // plain binary immediate group
    uint32_t i = (hw1 >> 10) & 1, imm4 = hw1 & 0xf;
    uint32_t imm3 = (hw2 >> 12) & 7, rd = (hw2 >> 8) & 0xf, imm8 = hw2 & 0xff;
    uint32_t imm12 = (i << 11) | (imm3 << 8) | imm8;
    uint32_t op = (hw1 & 0x03f0) >> 4;
    if (op == 0x24) {  // movw
      uint32_t imm16 = (imm4 << 12) | imm12;
      return mk({Mnemonic::Movw, Cond::Al, false,
                 {Operand::reg(uint8_t(rd)), Operand::imm(imm16)}});
    }
    if (op == 0x2c) {  // movt
      uint32_t imm16 = (imm4 << 12) | imm12;
      return mk({Mnemonic::Movt, Cond::Al, false,
                 {Operand::reg(uint8_t(rd)), Operand::imm(imm16)}});
    }
    if (op == 0x20 || op == 0x2a) {  // addw / subw
      bool is_sub = op == 0x2a;
      if (imm4 == PC) {  // adr T3/T2
        int32_t off = is_sub ? -int32_t(imm12) : int32_t(imm12);
        uint32_t target = pc_align4(addr, Mode::Thumb) + uint32_t(off);
        return mk({Mnemonic::Adr, Cond::Al, false,
                   {Operand::reg(uint8_t(rd)), Operand::literal(target, off)}});
      }
      return mk({is_sub ? Mnemonic::Sub : Mnemonic::Add, Cond::Al, false,
                 {Operand::reg(uint8_t(rd)), Operand::reg(uint8_t(imm4)), Operand::imm(imm12)}});
    }
    fail(Errc::UnknownEncoding, "thumb32 imm " + hex(enc));
  }

  if ((hw1 & 0xff7f) == 0xf85f) {  // ldr literal T2
    bool up = (hw1 & 0x80) != 0;
    uint32_t imm12 = hw2 & 0xfff, rt = (hw2 >> 12) & 0xf;
    int32_t off = up ? int32_t(imm12) : -int32_t(imm12);
    uint32_t target = pc_align4(addr, Mode::Thumb) + uint32_t(off);
    return mk({Mnemonic::Ldr, Cond::Al, false,
               {Operand::reg(uint8_t(rt)), Operand::literal(target, off)}});
  }
  if ((hw1 & 0xfff0) == 0xf8d0 || (hw1 & 0xfff0) == 0xf8c0 ||
      (hw1 & 0xfff0) == 0xf890 || (hw1 & 0xfff0) == 0xf880) {
    uint32_t rn = hw1 & 0xf;
    if (rn == PC) fail(Errc::UnknownEncoding, "thumb32 literal form " + hex(enc));
    uint32_t rt = (hw2 >> 12) & 0xf, imm12 = hw2 & 0xfff;
    Mnemonic m;
    switch (hw1 & 0x00f0) {
      case 0xd0: m = Mnemonic::Ldr; break;
      case 0xc0: m = Mnemonic::Str; break;
      case 0x90: m = Mnemonic::Ldrb; break;
      default: m = Mnemonic::Strb; break;
    }
    return mk({m, Cond::Al, false,
               {Operand::reg(uint8_t(rt)), Operand::reg(uint8_t(rn)), Operand::imm(imm12)}});
  }

  if ((hw1 & 0xffe0) == 0xeb00 && (hw2 & 0x8000) == 0) {  // add.w rd, rn, rm {,lsl #n}
    bool sf = (hw1 & 0x10) != 0;
    uint32_t rn = hw1 & 0xf, rd = (hw2 >> 8) & 0xf, rm = hw2 & 0xf;
    uint32_t type = (hw2 >> 4) & 3;
    uint32_t sh = (((hw2 >> 12) & 7) << 2) | ((hw2 >> 6) & 3);
    if (type != 0) fail(Errc::UnknownEncoding, "thumb32 shifted type " + hex(enc));
    Operand o = sh ? Operand::shifted(uint8_t(rm), uint8_t(sh)) : Operand::reg(uint8_t(rm));
    return mk({Mnemonic::Add, Cond::Al, sf,
               {Operand::reg(uint8_t(rd)), Operand::reg(uint8_t(rn)), o}});
  }

  fail(Errc::UnknownEncoding, "thumb32 " + hex(enc) + " at " + hex(addr));
}

// ---------------------------------------------------------------------------
// ARM decode

Instr decode_arm(uint32_t w, uint32_t addr) {
  auto mk = [&](InstrSpec s) { return make(std::move(s), addr, Mode::Arm, w, 4); };
  uint8_t cc = w >> 28;
  if (cc == 0xf) fail(Errc::UnknownEncoding, "arm unconditional space " + hex(w));

  if ((w & 0x0f000000) == 0x0a000000) {  // b
    int32_t off = sext(w & 0xffffff, 24) * 4;
    uint32_t target = pc_value(addr, Mode::Arm) + uint32_t(off);
    return mk({Mnemonic::B, Cond(cc), false, {Operand::target(target, off)}});
  }
  if ((w & 0x0f000000) == 0x0b000000) {  // bl
    int32_t off = sext(w & 0xffffff, 24) * 4;
    uint32_t target = pc_value(addr, Mode::Arm) + uint32_t(off);
    return mk({Mnemonic::Bl, Cond(cc), false, {Operand::target(target, off)}});
  }

  if (cc != uint8_t(Cond::Al))
    fail(Errc::UnknownEncoding, "conditional arm instruction outside subset " + hex(w));

  if ((w & 0x0ffffff0) == 0x012fff10)
    return mk({Mnemonic::Bx, Cond::Al, false, {Operand::reg(w & 0xf)}});
  if ((w & 0x0ffffff0) == 0x012fff30)
    return mk({Mnemonic::Blx, Cond::Al, false, {Operand::reg(w & 0xf)}});
  if ((w & 0x0fffffff) == 0x0320f000)
    return mk({Mnemonic::Nop, Cond::Al, false, {}});
  if ((w & 0x0ff000f0) == 0x07f000f0) {
    uint32_t imm = ((w >> 4) & 0xfff0) | (w & 0xf);
    return mk({Mnemonic::Udf, Cond::Al, false, {Operand::imm(imm)}});
  }
  if ((w & 0x0fff0000) == 0x092d0000)
    return mk({Mnemonic::Push, Cond::Al, false, {Operand::reg_list(w & 0xffff)}});
  if ((w & 0x0fff0000) == 0x08bd0000)
    return mk({Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(w & 0xffff)}});

  if ((w & 0x0ff00000) == 0x03000000 || (w & 0x0ff00000) == 0x03400000) {  // movw/movt
    uint32_t imm16 = ((w >> 4) & 0xf000) | (w & 0xfff);
    Mnemonic m = (w & 0x00400000) ? Mnemonic::Movt : Mnemonic::Movw;
    return mk({m, Cond::Al, false, {Operand::reg((w >> 12) & 0xf), Operand::imm(imm16)}});
  }

  if ((w & 0x0c000000) == 0x04000000) {  // ldr/str imm (P=1, W=0 only)
    bool reg_form = (w & 0x02000000) != 0;
    bool p = w & (1u << 24), up = w & (1u << 23), byte = w & (1u << 22), wb = w & (1u << 21),
         load = w & (1u << 20);
    if (!p || wb) fail(Errc::UnknownEncoding, "arm ldst addressing mode " + hex(w));
    uint32_t rn = (w >> 16) & 0xf, rt = (w >> 12) & 0xf;
    Mnemonic m = load ? (byte ? Mnemonic::Ldrb : Mnemonic::Ldr)
                      : (byte ? Mnemonic::Strb : Mnemonic::Str);
    if (!reg_form) {
      int32_t off = int32_t(w & 0xfff) * (up ? 1 : -1);
      if (rn == PC) {
        uint32_t target = pc_value(addr, Mode::Arm) + uint32_t(off);
        return mk({m, Cond::Al, false, {Operand::reg(uint8_t(rt)), Operand::literal(target, off)}});
      }
      return mk({m, Cond::Al, false,
                 {Operand::reg(uint8_t(rt)), Operand::reg(uint8_t(rn)),
                  Operand::imm(uint32_t(off))}});
    }
    if ((w & 0xff0) != 0 || !up)
      fail(Errc::UnknownEncoding, "arm ldst shifted register offset " + hex(w));
    return mk({m, Cond::Al, false,
               {Operand::reg(uint8_t(rt)), Operand::reg(uint8_t(rn)), Operand::reg(w & 0xf)}});
  }

  if ((w & 0x0c000000) == 0x00000000 || (w & 0x0e000000) == 0x02000000) {  // data processing
    uint32_t op = (w >> 21) & 0xf;
    bool sf = (w >> 20) & 1;
    bool imm_form = (w & 0x02000000) != 0;
    uint32_t rn = (w >> 16) & 0xf, rd = (w >> 12) & 0xf;
    Operand op2;
    Mnemonic shift_m = Mnemonic::Nop;
    uint8_t shift_amt = 0;
    if (imm_form) {
      uint32_t rot = (w >> 8) & 0xf, imm8 = w & 0xff;
      op2 = Operand::imm(ror32(imm8, rot * 2));
    } else {
      if (w & 0x10) fail(Errc::UnknownEncoding, "arm register-shifted register " + hex(w));
      uint32_t imm5 = (w >> 7) & 31, type = (w >> 5) & 3, rm = w & 0xf;
      if (type == 0) {
        if (imm5 == 0) op2 = Operand::reg(uint8_t(rm));
        else { shift_m = Mnemonic::Lsl; shift_amt = uint8_t(imm5); op2 = Operand::reg(uint8_t(rm)); }
      } else if (type == 1) {
        shift_m = Mnemonic::Lsr;
        shift_amt = imm5 ? uint8_t(imm5) : 32;
        op2 = Operand::reg(uint8_t(rm));
      } else {
        fail(Errc::UnknownEncoding, "arm shift type " + hex(w));
      }
    }
    switch (op) {
      case 0b0000: case 0b0001: case 0b1100: {  // and/eor/orr
        Mnemonic m = op == 0 ? Mnemonic::And : (op == 1 ? Mnemonic::Eor : Mnemonic::Orr);
        if (shift_m != Mnemonic::Nop) fail(Errc::UnknownEncoding, "arm shifted alu " + hex(w));
        return mk({m, Cond::Al, sf,
                   {Operand::reg(uint8_t(rd)), Operand::reg(uint8_t(rn)), op2}});
      }
      case 0b0010: case 0b0100: {  // sub/add
        Mnemonic m = op == 2 ? Mnemonic::Sub : Mnemonic::Add;
        if (rn == PC && imm_form && m == Mnemonic::Add) {  // adr
          int32_t off = int32_t(op2.value);
          uint32_t target = pc_value(addr, Mode::Arm) + uint32_t(off);
          return mk({Mnemonic::Adr, Cond::Al, false,
                     {Operand::reg(uint8_t(rd)), Operand::literal(target, off)}});
        }
        if (rn == PC && imm_form && m == Mnemonic::Sub) {
          int32_t off = -int32_t(op2.value);
          uint32_t target = pc_value(addr, Mode::Arm) + uint32_t(off);
          return mk({Mnemonic::Adr, Cond::Al, false,
                     {Operand::reg(uint8_t(rd)), Operand::literal(target, off)}});
        }
        if (shift_m == Mnemonic::Lsl && shift_amt)
          op2 = Operand::shifted(uint8_t(op2.value), shift_amt);
        else if (shift_m != Mnemonic::Nop)
          fail(Errc::UnknownEncoding, "arm shifted add/sub " + hex(w));
        return mk({m, Cond::Al, sf,
                   {Operand::reg(uint8_t(rd)), Operand::reg(uint8_t(rn)), op2}});
      }
      case 0b1010: {  // cmp
        if (!sf || rd != 0) fail(Errc::UnknownEncoding, "arm cmp form " + hex(w));
        if (shift_m != Mnemonic::Nop) fail(Errc::UnknownEncoding, "arm shifted cmp " + hex(w));
        return mk({Mnemonic::Cmp, Cond::Al, true, {Operand::reg(uint8_t(rn)), op2}});
      }
      case 0b1101: {  // mov / shifts
        if (rn != 0) fail(Errc::UnknownEncoding, "arm mov rn!=0 " + hex(w));
        if (shift_m == Mnemonic::Lsl || shift_m == Mnemonic::Lsr)
          return mk({shift_m, Cond::Al, sf,
                     {Operand::reg(uint8_t(rd)), op2, Operand::imm(shift_amt)}});
        return mk({Mnemonic::Mov, Cond::Al, sf, {Operand::reg(uint8_t(rd)), op2}});
      }
      default:
        fail(Errc::UnknownEncoding, "arm dp opcode " + hex(w));
    }
  }

  fail(Errc::UnknownEncoding, "arm " + hex(w) + " at " + hex(addr));
}

// ---------------------------------------------------------------------------
// Encode helpers

struct EncCtx {
  const InstrSpec& spec;
  uint32_t addr;
  Mode mode;
  uint8_t min_width;
};

[[noreturn]] void not_encodable(const EncCtx& c, const char* why) {
  fail(Errc::NotEncodable,
       std::string(mnemonic_name(c.spec.mnemonic)) + " at " + hex(c.addr) + ": " + why);
}

[[noreturn]] void out_of_range(const EncCtx& c, int64_t off) {
  fail(Errc::OutOfRange, std::string(mnemonic_name(c.spec.mnemonic)) + " at " + hex(c.addr) +
                             ": displacement " + std::to_string(off));
}

int64_t rel_offset(const EncCtx& c, uint32_t target, bool aligned_base) {
  uint32_t base = aligned_base ? pc_align4(c.addr, c.mode) : pc_value(c.addr, c.mode);
  return int64_t(int32_t(target - base));
}

uint32_t enc_branch_t4(uint32_t off_bits, bool link) {
  uint32_t s = (off_bits >> 24) & 1, i1 = (off_bits >> 23) & 1, i2 = (off_bits >> 22) & 1;
  uint32_t j1 = (~(i1 ^ s)) & 1, j2 = (~(i2 ^ s)) & 1;
  uint32_t imm10 = (off_bits >> 12) & 0x3ff, imm11 = (off_bits >> 1) & 0x7ff;
  uint32_t hw1 = 0xf000 | (s << 10) | imm10;
  uint32_t hw2 = (link ? 0xd000 : 0x9000) | (j1 << 13) | (j2 << 11) | imm11;
  return (hw1 << 16) | hw2;
}

Instr encode_thumb(const EncCtx& c) {
  const InstrSpec& s = c.spec;
  const auto& ops = s.operands;
  bool allow16 = c.min_width <= 2;
  auto mk16 = [&](uint32_t enc) { return make(s, c.addr, Mode::Thumb, enc, 2); };
  auto mk32 = [&](uint32_t enc) { return make(s, c.addr, Mode::Thumb, enc, 4); };
  auto nimm12 = [&](uint32_t i, uint32_t rn, uint32_t rd, uint32_t base) {
    // plain binary immediate layout shared by movw/movt/addw/subw
    uint32_t hw1 = base | ((i >> 11) << 10) | rn;
    uint32_t hw2 = (((i >> 8) & 7) << 12) | (rd << 8) | (i & 0xff);
    return (hw1 << 16) | hw2;
  };

  switch (s.mnemonic) {
    case Mnemonic::Nop:
      if (!allow16) not_encodable(c, "no 32-bit nop in subset");
      return mk16(0xbf00);
    case Mnemonic::Udf:
      if (ops.size() != 1 || ops[0].value > 0xff) not_encodable(c, "udf imm8 only");
      if (!allow16) not_encodable(c, "no 32-bit udf in subset");
      return mk16(0xde00 | ops[0].value);
    case Mnemonic::Push: {
      uint32_t list = ops.at(0).value;
      if (list & ~0x40ffu) not_encodable(c, "push list must be r0-r7/lr");
      if (!allow16) not_encodable(c, "no wide push in subset");
      return mk16(0xb400 | ((list >> LR) << 8) | (list & 0xff));
    }
    case Mnemonic::Pop: {
      uint32_t list = ops.at(0).value;
      if (list & ~0x80ffu) not_encodable(c, "pop list must be r0-r7/pc");
      if (!allow16) not_encodable(c, "no wide pop in subset");
      return mk16(0xbc00 | ((list >> PC) << 8) | (list & 0xff));
    }
    case Mnemonic::Mov: {
      if (ops.size() != 2) not_encodable(c, "mov arity");
      uint32_t rd = ops[0].value;
      if (ops[1].kind == Operand::Kind::Imm) {
        if (!s.set_flags) not_encodable(c, "plain mov-imm unsupported, use movw");
        if (!low_reg(rd) || ops[1].value > 0xff) not_encodable(c, "movs rd,#imm8 only");
        if (!allow16) not_encodable(c, "no wide movs imm in subset");
        return mk16(0x2000 | (rd << 8) | ops[1].value);
      }
      uint32_t rm = ops[1].value;
      if (s.set_flags) {
        if (!low_reg(rd) || !low_reg(rm)) not_encodable(c, "movs reg needs low regs");
        if (!allow16) not_encodable(c, "no wide movs reg in subset");
        return mk16(0x0000 | (rm << 3) | rd);  // lsls #0
      }
      if (!allow16) not_encodable(c, "no wide mov reg in subset");
      return mk16(0x4600 | ((rd & 8) << 4) | (rm << 3) | (rd & 7));
    }
    case Mnemonic::Movw:
    case Mnemonic::Movt: {
      uint32_t rd = ops.at(0).value, imm = ops.at(1).value;
      if (imm > 0xffff) not_encodable(c, "imm16 range");
      uint32_t base = s.mnemonic == Mnemonic::Movw ? 0xf240 : 0xf2c0;
      return mk32(nimm12(imm & 0xfff, imm >> 12, rd, base));
    }
    case Mnemonic::Add:
    case Mnemonic::Sub: {
      bool sub = s.mnemonic == Mnemonic::Sub;
      if (ops.size() == 2) {
        uint32_t rdn = ops[0].value;
        if (ops[1].kind == Operand::Kind::Imm) {
          uint32_t imm = ops[1].value;
          if (rdn == SP && !s.set_flags) {
            if (imm % 4 || imm > 508) not_encodable(c, "sp adjust imm7*4");
            if (!allow16) not_encodable(c, "no wide sp adjust in subset");
            return mk16(0xb000 | (sub ? 0x80 : 0) | (imm / 4));
          }
          if (s.set_flags && low_reg(rdn) && imm <= 0xff && allow16)
            return mk16((sub ? 0x3800 : 0x3000) | (rdn << 8) | imm);
          if (!s.set_flags && imm <= 0xfff)
            return mk32(nimm12(imm, rdn, rdn, sub ? 0xf2a0 : 0xf200));
          not_encodable(c, "2-op add/sub imm");
        }
        if (ops[1].kind == Operand::Kind::Reg && !sub) {
          if (s.set_flags) not_encodable(c, "adds rdn,rm use 3-op form");
          if (!allow16) not_encodable(c, "no wide add rdn,rm in subset");
          return mk16(0x4400 | ((ops[1].value & 0xf) << 3) | ((rdn & 8) << 4) | (rdn & 7));
        }
        not_encodable(c, "2-op add/sub operand kind");
      }
      if (ops.size() != 3) not_encodable(c, "add/sub arity");
      uint32_t rd = ops[0].value, rn = ops[1].value;
      if (ops[2].kind == Operand::Kind::Imm) {
        uint32_t imm = ops[2].value;
        if (s.set_flags) {
          if (!low_reg(rd) || !low_reg(rn) || imm > 7) not_encodable(c, "adds imm3 form");
          if (!allow16) not_encodable(c, "no wide adds imm3 in subset");
          return mk16((sub ? 0x1e00 : 0x1c00) | (imm << 6) | (rn << 3) | rd);
        }
        if (imm > 0xfff) not_encodable(c, "addw imm12 range");
        return mk32(nimm12(imm, rn, rd, sub ? 0xf2a0 : 0xf200));
      }
      if (ops[2].kind == Operand::Kind::Reg) {
        uint32_t rm = ops[2].value;
        if (s.set_flags && low_reg(rd) && low_reg(rn) && low_reg(rm) && allow16 && !sub)
          return mk16(0x1800 | (rm << 6) | (rn << 3) | rd);
        if (s.set_flags && low_reg(rd) && low_reg(rn) && low_reg(rm) && allow16 && sub)
          return mk16(0x1a00 | (rm << 6) | (rn << 3) | rd);
        if (sub) not_encodable(c, "wide sub reg not in subset");
        return mk32(((0xeb00u | (s.set_flags ? 0x10 : 0) | rn) << 16) | (rd << 8) | rm);
      }
      if (ops[2].kind == Operand::Kind::ShiftedReg) {
        if (sub) not_encodable(c, "shifted sub not in subset");
        uint32_t rm = ops[2].value, sh = ops[2].shift;
        if (sh == 0 || sh > 31) not_encodable(c, "lsl shift amount");
        uint32_t hw2 = (((sh >> 2) & 7) << 12) | (rd << 8) | ((sh & 3) << 6) | rm;
        return mk32(((0xeb00u | (s.set_flags ? 0x10 : 0) | rn) << 16) | hw2);
      }
      not_encodable(c, "add/sub operand kind");
    }
    case Mnemonic::Cmp: {
      if (ops.size() != 2) not_encodable(c, "cmp arity");
      uint32_t rn = ops[0].value;
      if (!allow16) not_encodable(c, "no wide cmp in subset");
      if (ops[1].kind == Operand::Kind::Imm) {
        if (!low_reg(rn) || ops[1].value > 0xff) not_encodable(c, "cmp imm8 form");
        return mk16(0x2800 | (rn << 8) | ops[1].value);
      }
      if (!low_reg(rn) || !low_reg(ops[1].value)) not_encodable(c, "cmp reg low form");
      return mk16(0x4280 | (ops[1].value << 3) | rn);
    }
    case Mnemonic::And:
    case Mnemonic::Orr:
    case Mnemonic::Eor: {
      if (ops.size() != 2 || ops[1].kind != Operand::Kind::Reg)
        not_encodable(c, "alu rdn,rm form only");
      uint32_t rdn = ops[0].value, rm = ops[1].value;
      if (!low_reg(rdn) || !low_reg(rm) || !s.set_flags) not_encodable(c, "alu low-reg flags form");
      if (!allow16) not_encodable(c, "no wide alu in subset");
      uint32_t op = s.mnemonic == Mnemonic::And ? 0 : (s.mnemonic == Mnemonic::Eor ? 1 : 12);
      return mk16(0x4000 | (op << 6) | (rm << 3) | rdn);
    }
    case Mnemonic::Lsl:
    case Mnemonic::Lsr: {
      if (ops.size() != 3 || ops[2].kind != Operand::Kind::Imm) not_encodable(c, "shift form");
      uint32_t rd = ops[0].value, rm = ops[1].value, imm = ops[2].value;
      if (!low_reg(rd) || !low_reg(rm) || !s.set_flags) not_encodable(c, "shift low-reg form");
      if (!allow16) not_encodable(c, "no wide shift in subset");
      if (s.mnemonic == Mnemonic::Lsl) {
        if (imm < 1 || imm > 31) not_encodable(c, "lsl imm 1-31");
        return mk16(0x0000 | (imm << 6) | (rm << 3) | rd);
      }
      if (imm < 1 || imm > 32) not_encodable(c, "lsr imm 1-32");
      return mk16(0x0800 | ((imm & 31) << 6) | (rm << 3) | rd);
    }
    case Mnemonic::Ldr:
    case Mnemonic::Str:
    case Mnemonic::Ldrb:
    case Mnemonic::Strb: {
      bool load = s.mnemonic == Mnemonic::Ldr || s.mnemonic == Mnemonic::Ldrb;
      bool byte = s.mnemonic == Mnemonic::Ldrb || s.mnemonic == Mnemonic::Strb;
      if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad) {
        if (!load || byte) not_encodable(c, "pc-literal is ldr only");
        uint32_t rt = ops[0].value;
        int64_t off = rel_offset(c, ops[1].value, true);
        if (allow16 && low_reg(rt) && off >= 0 && off <= 1020 && off % 4 == 0)
          return mk16(0x4800 | (rt << 8) | uint32_t(off / 4));
        if (off < -4095 || off > 4095) out_of_range(c, off);
        uint32_t hw1 = 0xf85f | (off >= 0 ? 0x80 : 0);
        uint32_t imm12 = uint32_t(off >= 0 ? off : -off);
        return mk32((hw1 << 16) | (rt << 12) | imm12);
      }
      if (ops.size() != 3) not_encodable(c, "ldst arity");
      uint32_t rt = ops[0].value, rn = ops[1].value;
      if (ops[2].kind == Operand::Kind::Reg) {
        uint32_t rm = ops[2].value;
        if (!low_reg(rt) || !low_reg(rn) || !low_reg(rm)) not_encodable(c, "reg-offset low regs");
        if (!allow16) not_encodable(c, "no wide reg-offset in subset");
        uint32_t op = load ? (byte ? 0b110 : 0b100) : (byte ? 0b010 : 0b000);
        return mk16(0x5000 | (op << 9) | (rm << 6) | (rn << 3) | rt);
      }
      if (ops[2].kind != Operand::Kind::Imm) not_encodable(c, "ldst operand kind");
      int32_t imm = int32_t(ops[2].value);
      if (imm >= 0 && allow16 && low_reg(rt)) {
        if (rn == SP && !byte && imm % 4 == 0 && imm <= 1020)
          return mk16((load ? 0x9800 : 0x9000) | (rt << 8) | uint32_t(imm / 4));
        if (low_reg(rn)) {
          if (!byte && imm % 4 == 0 && imm <= 124) {
            uint32_t base = load ? 0x6800 : 0x6000;
            return mk16(base | (uint32_t(imm / 4) << 6) | (rn << 3) | rt);
          }
          if (byte && imm <= 31) {
            uint32_t base = load ? 0x7800 : 0x7000;
            return mk16(base | (uint32_t(imm) << 6) | (rn << 3) | rt);
          }
        }
      }
      if (imm < 0 || imm > 0xfff) out_of_range(c, imm);
      uint32_t hw1;
      if (load) hw1 = byte ? 0xf890 : 0xf8d0;
      else hw1 = byte ? 0xf880 : 0xf8c0;
      return mk32(((hw1 | rn) << 16) | (rt << 12) | uint32_t(imm));
    }
    case Mnemonic::Adr: {
      if (ops.size() != 2 || ops[1].kind != Operand::Kind::PcRelLoad)
        not_encodable(c, "adr operand kind");
      uint32_t rd = ops[0].value;
      int64_t off = rel_offset(c, ops[1].value, true);
      if (allow16 && low_reg(rd) && off >= 0 && off <= 1020 && off % 4 == 0)
        return mk16(0xa000 | (rd << 8) | uint32_t(off / 4));
      if (off >= 0 && off <= 0xfff) return mk32(nimm12(uint32_t(off), PC, rd, 0xf200));
      if (off < 0 && -off <= 0xfff) return mk32(nimm12(uint32_t(-off), PC, rd, 0xf2a0));
      out_of_range(c, off);
    }
    case Mnemonic::B: {
      if (ops.size() != 1 || ops[0].kind != Operand::Kind::PcRelTarget)
        not_encodable(c, "b operand kind");
      int64_t off = rel_offset(c, ops[0].value, false);
      if (off & 1) fail(Errc::Misaligned, "branch target odd at " + hex(c.addr));
      if (s.cond == Cond::Al) {
        if (allow16 && off >= -2048 && off <= 2046)
          return mk16(0xe000 | (uint32_t(off >> 1) & 0x7ff));
        if (off < -(1 << 24) || off > (1 << 24) - 2) out_of_range(c, off);
        return mk32(enc_branch_t4(uint32_t(off) & 0x1ffffff, false));
      }
      if (allow16 && off >= -256 && off <= 254)
        return mk16(0xd000 | (uint32_t(s.cond) << 8) | (uint32_t(off >> 1) & 0xff));
      if (off < -(1 << 20) || off > (1 << 20) - 2) out_of_range(c, off);
      uint32_t o = uint32_t(off) & 0x1fffff;
      uint32_t sbit = (o >> 20) & 1, j2 = (o >> 19) & 1, j1 = (o >> 18) & 1;
      uint32_t imm6 = (o >> 12) & 0x3f, imm11 = (o >> 1) & 0x7ff;
      uint32_t hw1 = 0xf000 | (sbit << 10) | (uint32_t(s.cond) << 6) | imm6;
      uint32_t hw2 = 0x8000 | (j1 << 13) | (j2 << 11) | imm11;
      return mk32((hw1 << 16) | hw2);
    }
    case Mnemonic::Bl: {
      if (ops.size() != 1 || ops[0].kind != Operand::Kind::PcRelTarget)
        not_encodable(c, "bl operand kind");
      int64_t off = rel_offset(c, ops[0].value, false);
      if (off & 1) fail(Errc::Misaligned, "bl target odd at " + hex(c.addr));
      if (off < -(1 << 24) || off > (1 << 24) - 2) out_of_range(c, off);
      return mk32(enc_branch_t4(uint32_t(off) & 0x1ffffff, true));
    }
    case Mnemonic::Blx: {
      if (ops.size() != 1) not_encodable(c, "blx arity");
      if (ops[0].kind == Operand::Kind::Reg) {
        if (!allow16) not_encodable(c, "no wide blx reg");
        return mk16(0x4780 | (ops[0].value << 3));
      }
      // immediate form: target is ARM code, word aligned
      int64_t off = int64_t(int32_t(ops[0].value - pc_align4(c.addr, Mode::Thumb)));
      if (off & 3) fail(Errc::Misaligned, "blx target not word aligned at " + hex(c.addr));
      if (off < -(1 << 24) || off > (1 << 24) - 4) out_of_range(c, off);
      uint32_t o = uint32_t(off) & 0x1ffffff;
      uint32_t sbit = (o >> 24) & 1, i1 = (o >> 23) & 1, i2 = (o >> 22) & 1;
      uint32_t j1 = (~(i1 ^ sbit)) & 1, j2 = (~(i2 ^ sbit)) & 1;
      uint32_t imm10h = (o >> 12) & 0x3ff, imm10l = (o >> 2) & 0x3ff;
      uint32_t hw1 = 0xf000 | (sbit << 10) | imm10h;
      uint32_t hw2 = 0xc000 | (j1 << 13) | (j2 << 11) | (imm10l << 1);
      return mk32((hw1 << 16) | hw2);
    }
    case Mnemonic::Bx:
      if (ops.size() != 1 || ops[0].kind != Operand::Kind::Reg) not_encodable(c, "bx operand");
      if (!allow16) not_encodable(c, "no wide bx");
      return mk16(0x4700 | (ops[0].value << 3));
  }
  not_encodable(c, "mnemonic outside thumb subset");
}

// Finds rot such that value == ror(imm8, 2*rot); returns (rot<<8)|imm8 or fails.
uint32_t arm_modimm(const EncCtx& c, uint32_t value) {
  for (uint32_t rot = 0; rot < 16; ++rot) {
    uint32_t v = ror32(value, 32 - 2 * rot);  // rol by 2*rot
    if (v <= 0xff) return (rot << 8) | v;
  }
  not_encodable(c, "value not an ARM modified immediate");
}

Instr encode_arm(const EncCtx& c) {
  const InstrSpec& s = c.spec;
  const auto& ops = s.operands;
  const uint32_t AL = 0xe0000000;
  auto mk = [&](uint32_t enc) { return make(s, c.addr, Mode::Arm, enc, 4); };
  auto dp = [&](uint32_t op, uint32_t rn, uint32_t rd, const Operand& op2) -> uint32_t {
    uint32_t base = AL | (op << 21) | (s.set_flags ? (1u << 20) : 0) | (rn << 16) | (rd << 12);
    if (op2.kind == Operand::Kind::Imm)
      return base | 0x02000000 | arm_modimm(c, op2.value);
    if (op2.kind == Operand::Kind::Reg) return base | op2.value;
    if (op2.kind == Operand::Kind::ShiftedReg)
      return base | (uint32_t(op2.shift) << 7) | op2.value;
    not_encodable(c, "arm operand2 kind");
  };

  switch (s.mnemonic) {
    case Mnemonic::Nop: return mk(0xe320f000);
    case Mnemonic::Udf: {
      uint32_t imm = ops.at(0).value;
      if (imm > 0xffff) not_encodable(c, "udf imm16");
      return mk(0xe7f000f0 | ((imm >> 4) << 8) | (imm & 0xf));
    }
    case Mnemonic::Push: return mk(0xe92d0000 | (ops.at(0).value & 0xffff));
    case Mnemonic::Pop: return mk(0xe8bd0000 | (ops.at(0).value & 0xffff));
    case Mnemonic::Mov: {
      if (ops.size() != 2) not_encodable(c, "mov arity");
      return mk(dp(0b1101, 0, ops[0].value, ops[1]));
    }
    case Mnemonic::Movw:
    case Mnemonic::Movt: {
      uint32_t rd = ops.at(0).value, imm = ops.at(1).value;
      if (imm > 0xffff) not_encodable(c, "imm16");
      uint32_t base = s.mnemonic == Mnemonic::Movw ? 0xe3000000 : 0xe3400000;
      return mk(base | ((imm >> 12) << 16) | (rd << 12) | (imm & 0xfff));
    }
    case Mnemonic::Add:
    case Mnemonic::Sub: {
      if (ops.size() != 3) not_encodable(c, "arm add/sub is 3-op");
      uint32_t op = s.mnemonic == Mnemonic::Add ? 0b0100 : 0b0010;
      return mk(dp(op, ops[1].value, ops[0].value, ops[2]));
    }
    case Mnemonic::Cmp: {
      if (ops.size() != 2) not_encodable(c, "cmp arity");
      uint32_t enc = dp(0b1010, ops[0].value, 0, ops[1]);
      return mk(enc | (1u << 20));
    }
    case Mnemonic::And: return mk(dp(0b0000, ops.at(1).value, ops.at(0).value, ops.at(2)));
    case Mnemonic::Eor: return mk(dp(0b0001, ops.at(1).value, ops.at(0).value, ops.at(2)));
    case Mnemonic::Orr: return mk(dp(0b1100, ops.at(1).value, ops.at(0).value, ops.at(2)));
    case Mnemonic::Lsl:
    case Mnemonic::Lsr: {
      uint32_t rd = ops.at(0).value, rm = ops.at(1).value, imm = ops.at(2).value;
      uint32_t type = s.mnemonic == Mnemonic::Lsl ? 0 : 1;
      if (s.mnemonic == Mnemonic::Lsl && (imm < 1 || imm > 31)) not_encodable(c, "lsl 1-31");
      if (s.mnemonic == Mnemonic::Lsr && (imm < 1 || imm > 32)) not_encodable(c, "lsr 1-32");
      uint32_t base = AL | (0b1101u << 21) | (s.set_flags ? (1u << 20) : 0) | (rd << 12);
      return mk(base | ((imm & 31) << 7) | (type << 5) | rm);
    }
    case Mnemonic::Ldr:
    case Mnemonic::Str:
    case Mnemonic::Ldrb:
    case Mnemonic::Strb: {
      bool load = s.mnemonic == Mnemonic::Ldr || s.mnemonic == Mnemonic::Ldrb;
      bool byte = s.mnemonic == Mnemonic::Ldrb || s.mnemonic == Mnemonic::Strb;
      uint32_t base = AL | 0x04000000 | (1u << 24) | (byte ? (1u << 22) : 0) |
                      (load ? (1u << 20) : 0);
      if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad) {
        int64_t off = rel_offset(c, ops[1].value, false);
        if (off < -4095 || off > 4095) out_of_range(c, off);
        uint32_t up = off >= 0 ? (1u << 23) : 0;
        return mk(base | up | (uint32_t(PC) << 16) | (ops[0].value << 12) |
                  uint32_t(off >= 0 ? off : -off));
      }
      if (ops.size() != 3) not_encodable(c, "ldst arity");
      uint32_t rt = ops[0].value, rn = ops[1].value;
      if (ops[2].kind == Operand::Kind::Reg)
        return mk(base | 0x02000000 | (1u << 23) | (rn << 16) | (rt << 12) | ops[2].value);
      int32_t imm = int32_t(ops[2].value);
      if (imm < -4095 || imm > 4095) out_of_range(c, imm);
      uint32_t up = imm >= 0 ? (1u << 23) : 0;
      return mk(base | up | (rn << 16) | (rt << 12) | uint32_t(imm >= 0 ? imm : -imm));
    }
    case Mnemonic::Adr: {
      if (ops.size() != 2 || ops[1].kind != Operand::Kind::PcRelLoad)
        not_encodable(c, "adr operand kind");
      int64_t off = rel_offset(c, ops[1].value, false);
      uint32_t op = off >= 0 ? 0b0100 : 0b0010;
      uint32_t mag = uint32_t(off >= 0 ? off : -off);
      uint32_t base = AL | (op << 21) | (uint32_t(PC) << 16) | (ops[0].value << 12);
      return mk(base | 0x02000000 | arm_modimm(c, mag));
    }
    case Mnemonic::B:
    case Mnemonic::Bl: {
      if (ops.size() != 1 || ops[0].kind != Operand::Kind::PcRelTarget)
        not_encodable(c, "branch operand kind");
      int64_t off = rel_offset(c, ops[0].value, false);
      if (off & 3) fail(Errc::Misaligned, "arm branch target at " + hex(c.addr));
      if (off < -(1 << 25) || off > (1 << 25) - 4) out_of_range(c, off);
      uint32_t base = (uint32_t(s.cond) << 28) |
                      (s.mnemonic == Mnemonic::B ? 0x0a000000 : 0x0b000000);
      return mk(base | ((uint32_t(off) >> 2) & 0xffffff));
    }
    case Mnemonic::Bx: return mk(0xe12fff10 | ops.at(0).value);
    case Mnemonic::Blx: {
      if (ops.at(0).kind != Operand::Kind::Reg) not_encodable(c, "arm blx imm not in subset");
      return mk(0xe12fff30 | ops[0].value);
    }
  }
  not_encodable(c, "mnemonic outside arm subset");
}

}  // namespace

const char* mnemonic_name(Mnemonic m) {
  switch (m) {
    case Mnemonic::Push: return "push";
    case Mnemonic::Pop: return "pop";
    case Mnemonic::Mov: return "mov";
    case Mnemonic::Movw: return "movw";
    case Mnemonic::Movt: return "movt";
    case Mnemonic::Add: return "add";
    case Mnemonic::Sub: return "sub";
    case Mnemonic::Cmp: return "cmp";
    case Mnemonic::And: return "and";
    case Mnemonic::Orr: return "orr";
    case Mnemonic::Eor: return "eor";
    case Mnemonic::Lsl: return "lsl";
    case Mnemonic::Lsr: return "lsr";
    case Mnemonic::Ldr: return "ldr";
    case Mnemonic::Ldrb: return "ldrb";
    case Mnemonic::Str: return "str";
    case Mnemonic::Strb: return "strb";
    case Mnemonic::Adr: return "adr";
    case Mnemonic::B: return "b";
    case Mnemonic::Bl: return "bl";
    case Mnemonic::Blx: return "blx";
    case Mnemonic::Bx: return "bx";
    case Mnemonic::Nop: return "nop";
    case Mnemonic::Udf: return "udf";
  }
  return "?";
}

const char* cond_name(Cond c) {
  static const char* names[] = {"eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc",
                                "hi", "ls", "ge", "lt", "gt", "le", ""};
  return names[uint8_t(c)];
}

std::string Instr::text() const {
  std::string out = mnemonic_name(spec.mnemonic);
  out += cond_name(spec.cond);
  for (size_t i = 0; i < spec.operands.size(); ++i) {
    out += i ? ", " : " ";
    const Operand& o = spec.operands[i];
    char buf[48];
    switch (o.kind) {
      case Operand::Kind::Reg: std::snprintf(buf, sizeof buf, "r%u", o.value); break;
      case Operand::Kind::Imm: std::snprintf(buf, sizeof buf, "#0x%x", o.value); break;
      case Operand::Kind::PcRelTarget:
      case Operand::Kind::PcRelLoad:
        std::snprintf(buf, sizeof buf, "=0x%x", o.value);
        break;
      case Operand::Kind::RegList: std::snprintf(buf, sizeof buf, "{%#x}", o.value); break;
      case Operand::Kind::ShiftedReg:
        std::snprintf(buf, sizeof buf, "r%u lsl #%u", o.value, o.shift);
        break;
    }
    out += buf;
  }
  return out;
}

Instr decode(std::span<const uint8_t> bytes, uint32_t addr, Mode mode) {
  if (mode == Mode::Arm) {
    if (addr & 3) fail(Errc::Misaligned, "arm instruction at " + hex(addr));
    if (bytes.size() < 4) fail(Errc::UnknownEncoding, "short read at " + hex(addr));
    return decode_arm(rd32(bytes, 0), addr);
  }
  if (addr & 1) fail(Errc::Misaligned, "thumb instruction at " + hex(addr));
  if (bytes.size() < 2) fail(Errc::UnknownEncoding, "short read at " + hex(addr));
  uint16_t hw1 = rd16(bytes, 0);
  if ((hw1 & 0xf800) >= 0xe800 && (hw1 & 0xf800) != 0xe000) {
    if (bytes.size() < 4) fail(Errc::UnknownEncoding, "truncated thumb32 at " + hex(addr));
    return decode_thumb32(hw1, rd16(bytes, 2), addr);
  }
  return decode_thumb16(hw1, addr);
}

Instr encode(const InstrSpec& spec, uint32_t addr, Mode mode, uint8_t min_width) {
  EncCtx c{spec, addr, mode, min_width};
  Instr out = mode == Mode::Thumb ? encode_thumb(c) : encode_arm(c);
  // Normalize pc-relative displacements so decode(encode(x)) round-trips exactly.
  Instr checked = decode(std::span<const uint8_t>(out.raw.data(), out.width), addr, mode);
  for (const auto& a : spec.operands) {
    if (a.kind == Operand::Kind::PcRelTarget || a.kind == Operand::Kind::PcRelLoad) {
      bool found = false;
      for (const auto& b : checked.spec.operands)
        if (b.kind == a.kind && b.value == a.value) found = true;
      if (!found)
        fail(Errc::OutOfRange, "encoded target drifted at " + hex(addr));
    }
  }
  return checked;
}

bool is_pc_relative(const InstrSpec& spec) {
  for (const auto& o : spec.operands)
    if (o.kind == Operand::Kind::PcRelTarget || o.kind == Operand::Kind::PcRelLoad) return true;
  return false;
}

bool is_branch(Mnemonic m) {
  return m == Mnemonic::B || m == Mnemonic::Bl || m == Mnemonic::Blx || m == Mnemonic::Bx;
}

uint32_t widen_delta(const Instr& old_instr, uint32_t new_addr, uint32_t new_target) {
  if (!is_pc_relative(old_instr.spec))
    fail(Errc::NotEncodable, "widen_delta on non pc-relative instruction");
  InstrSpec s = old_instr.spec;
  for (auto& o : s.operands)
    if (o.kind == Operand::Kind::PcRelTarget || o.kind == Operand::Kind::PcRelLoad)
      o.value = new_target;
  Instr re = encode(s, new_addr, old_instr.mode, old_instr.width);
  return re.width - old_instr.width;
}

}  // namespace mend::isa
