#include "mend/interp.hpp"

#include <bit>
#include <sstream>

namespace mend::interp {

using isa::Cond;
using isa::Instr;
using isa::Mnemonic;
using isa::Operand;

namespace {

struct Machine {
  const BinaryImage& img;
  MachineState st;

  uint8_t read8(uint32_t a) {
    auto it = st.mem.find(a);
    if (it != st.mem.end()) return it->second;
    if (img.is_mapped(a)) return img.read(a, 1)[0];
    fail(Errc::UnmappedAccess, "read at " + hex(a));
  }
  void write8(uint32_t a, uint8_t v) {
    if (st.mem.count(a) || img.is_mapped(a)) {
      st.mem[a] = v;
      return;
    }
    fail(Errc::UnmappedAccess, "write at " + hex(a));
  }
  uint32_t read32(uint32_t a) {
    return read8(a) | read8(a + 1) << 8 | read8(a + 2) << 16 | uint32_t(read8(a + 3)) << 24;
  }
  void write32(uint32_t a, uint32_t v) {
    for (int i = 0; i < 4; ++i) write8(a + i, uint8_t(v >> (8 * i)));
  }

  bool cond_holds(Cond c) const {
    switch (c) {
      case Cond::Eq: return st.z;
      case Cond::Ne: return !st.z;
      case Cond::Cs: return st.c;
      case Cond::Cc: return !st.c;
      case Cond::Mi: return st.n;
      case Cond::Pl: return !st.n;
      case Cond::Vs: return st.v;
      case Cond::Vc: return !st.v;
      case Cond::Hi: return st.c && !st.z;
      case Cond::Ls: return !st.c || st.z;
      case Cond::Ge: return st.n == st.v;
      case Cond::Lt: return st.n != st.v;
      case Cond::Gt: return !st.z && st.n == st.v;
      case Cond::Le: return st.z || st.n != st.v;
      case Cond::Al: return true;
    }
    return true;
  }

  void set_nz(uint32_t r) {
    st.n = (r >> 31) & 1;
    st.z = r == 0;
  }

  uint32_t add_flags(uint32_t a, uint32_t b, uint32_t carry_in, bool set) {
    uint64_t wide = uint64_t(a) + b + carry_in;
    uint32_t r = uint32_t(wide);
    if (set) {
      set_nz(r);
      st.c = (wide >> 32) != 0;
      st.v = (~(a ^ b) & (a ^ r)) >> 31;
    }
    return r;
  }

  uint32_t operand_value(const Instr& ins, const Operand& o) {
    switch (o.kind) {
      case Operand::Kind::Imm: return o.value;
      case Operand::Kind::Reg:
        if (o.value == isa::PC) return isa::pc_value(ins.addr, ins.mode);
        return st.regs[o.value];
      case Operand::Kind::ShiftedReg: return st.regs[o.value] << o.shift;
      case Operand::Kind::PcRelTarget:
      case Operand::Kind::PcRelLoad: return o.value;
      case Operand::Kind::RegList: return o.value;
    }
    return 0;
  }

  // Returns the next pc.
  uint32_t exec(const Instr& ins) {
    uint32_t next = ins.addr + ins.width;
    const auto& ops = ins.operands();
    if (!cond_holds(ins.spec.cond) && ins.mnemonic() != Mnemonic::B) return next;
    auto val = [&](const Operand& o) { return operand_value(ins, o); };

    switch (ins.mnemonic()) {
      case Mnemonic::Nop: break;
      case Mnemonic::Udf: fail(Errc::UndefinedInstruction, "udf at " + hex(ins.addr));
      case Mnemonic::Push: {
        uint32_t list = ops.at(0).value;
        st.regs[isa::SP] -= 4 * std::popcount(list);
        uint32_t a = st.regs[isa::SP];
        for (uint8_t r = 0; r < 16; ++r)
          if ((list >> r) & 1) {
            write32(a, st.regs[r]);
            a += 4;
          }
        break;
      }
      case Mnemonic::Pop: {
        uint32_t list = ops.at(0).value;
        uint32_t a = st.regs[isa::SP];
        std::optional<uint32_t> new_pc;
        for (uint8_t r = 0; r < 16; ++r)
          if ((list >> r) & 1) {
            uint32_t v = read32(a);
            if (r == isa::PC) new_pc = v;
            else st.regs[r] = v;
            a += 4;
          }
        st.regs[isa::SP] = a;
        if (new_pc) return *new_pc & ~1u;
        break;
      }
      case Mnemonic::Mov: {
        uint32_t v = val(ops.at(1));
        st.regs[ops.at(0).value] = v;
        if (ins.spec.set_flags) set_nz(v);
        break;
      }
      case Mnemonic::Movw:
        st.regs[ops.at(0).value] = ops.at(1).value;
        break;
      case Mnemonic::Movt:
        st.regs[ops.at(0).value] =
            (st.regs[ops.at(0).value] & 0xffffu) | (ops.at(1).value << 16);
        break;
      case Mnemonic::Add:
      case Mnemonic::Sub: {
        bool sub = ins.mnemonic() == Mnemonic::Sub;
        uint32_t a, b;
        if (ops.size() == 2) {
          a = ops[0].value == isa::PC ? isa::pc_value(ins.addr, ins.mode)
                                      : st.regs[ops[0].value];
          // `add rd, pc` reads the aligned PC in thumb per the T2 ADD form.
          if (ops[1].kind == Operand::Kind::Reg && ops[1].value == isa::PC &&
              ins.mode == isa::Mode::Thumb)
            b = isa::pc_value(ins.addr, ins.mode);
          else
            b = val(ops[1]);
        } else {
          a = val(ops.at(1));
          b = val(ops.at(2));
        }
        uint32_t r = sub ? add_flags(a, ~b, 1, ins.spec.set_flags)
                         : add_flags(a, b, 0, ins.spec.set_flags);
        st.regs[ops[0].value] = r;
        break;
      }
      case Mnemonic::Cmp: {
        uint32_t a = val(ops.at(0)), b = val(ops.at(1));
        add_flags(a, ~b, 1, true);
        break;
      }
      case Mnemonic::And:
      case Mnemonic::Orr:
      case Mnemonic::Eor: {
        uint32_t a = st.regs[ops.at(0).value], b = val(ops.at(1));
        uint32_t r = ins.mnemonic() == Mnemonic::And ? a & b
                     : ins.mnemonic() == Mnemonic::Orr ? a | b
                                                       : a ^ b;
        if (ops.size() == 3) {
          a = val(ops[1]);
          b = val(ops[2]);
          r = ins.mnemonic() == Mnemonic::And ? a & b
              : ins.mnemonic() == Mnemonic::Orr ? a | b
                                                : a ^ b;
        }
        st.regs[ops[0].value] = r;
        if (ins.spec.set_flags) set_nz(r);
        break;
      }
      case Mnemonic::Lsl:
      case Mnemonic::Lsr: {
        uint32_t a = val(ops.at(1));
        uint32_t sh = ops.size() > 2 ? val(ops.at(2)) : 0;
        uint32_t r;
        if (ins.mnemonic() == Mnemonic::Lsl) {
          r = sh >= 32 ? 0 : a << sh;
          if (ins.spec.set_flags && sh > 0) st.c = sh <= 32 && ((a >> (32 - sh)) & 1);
        } else {
          r = sh >= 32 ? 0 : a >> sh;
          if (ins.spec.set_flags && sh > 0) st.c = sh <= 32 && ((a >> (sh - 1)) & 1);
        }
        st.regs[ops.at(0).value] = r;
        if (ins.spec.set_flags) set_nz(r);
        break;
      }
      case Mnemonic::Ldr:
      case Mnemonic::Ldrb: {
        uint32_t a;
        if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad) {
          a = ops[1].value;
        } else {
          a = st.regs[ops.at(1).value] + val(ops.at(2));
        }
        st.regs[ops[0].value] = ins.mnemonic() == Mnemonic::Ldr ? read32(a) : read8(a);
        break;
      }
      case Mnemonic::Str:
      case Mnemonic::Strb: {
        uint32_t a = st.regs[ops.at(1).value] + val(ops.at(2));
        if (ins.mnemonic() == Mnemonic::Str) write32(a, st.regs[ops[0].value]);
        else write8(a, uint8_t(st.regs[ops[0].value]));
        break;
      }
      case Mnemonic::Adr:
        st.regs[ops.at(0).value] = ops.at(1).value;
        break;
      case Mnemonic::B:
        if (cond_holds(ins.spec.cond)) return ops.at(0).value;
        break;
      case Mnemonic::Bl:
      case Mnemonic::Blx: {
        uint32_t target;
        if (ops.at(0).kind == Operand::Kind::Reg) target = st.regs[ops[0].value] & ~1u;
        else target = ops[0].value;
        auto plt = img.plt_stubs().find(target);
        std::optional<std::string> stub;
        if (plt != img.plt_stubs().end()) stub = plt->second;
        if (!stub) {
          // Host-stub any named callee that lives outside executable bytes.
          if (auto n = img.symbol_at(target); n && !img.is_mapped(target)) stub = n;
        }
        if (stub) {
          st.trace.push_back(
              {*stub, {st.regs[0], st.regs[1], st.regs[2], st.regs[3]}});
          st.regs[0] = 0;
          break;
        }
        st.regs[isa::LR] = next | (ins.mode == isa::Mode::Thumb ? 1u : 0u);
        return target;
      }
      case Mnemonic::Bx: {
        uint32_t t = st.regs[ops.at(0).value];
        return t & ~1u;
      }
    }
    return next;
  }
};

}  // namespace

MachineState interpret(const BinaryImage& img, const TestVector& vec) {
  Machine m{img, {}};
  m.st.mode = img.mode_hint(vec.entry).value_or(isa::Mode::Thumb);
  for (const auto& [r, v] : vec.regs) m.st.regs[r] = v;
  for (const auto& [a, b] : vec.memory) m.st.mem[a] = b;
  if (!vec.regs.count(isa::SP)) m.st.regs[isa::SP] = 0x80000;
  for (uint32_t a = 0x7f000; a < 0x80000; ++a)
    if (!m.st.mem.count(a)) m.st.mem[a] = 0;  // scratch stack
  m.st.regs[isa::LR] = kReturnSentinel | 1u;

  uint32_t pc = vec.entry & ~1u;
  while (pc != (kReturnSentinel & ~1u)) {
    if (m.st.steps >= vec.fuel) fail(Errc::FuelExhausted, "after " + std::to_string(m.st.steps) + " steps");
    ++m.st.steps;
    uint8_t buf[4] = {0, 0, 0, 0};
    buf[0] = m.read8(pc);
    buf[1] = m.read8(pc + 1);
    // Second halfword may sit at the end of a mapping; tolerate short fetch.
    try {
      buf[2] = m.read8(pc + 2);
      buf[3] = m.read8(pc + 3);
    } catch (const Error&) {
    }
    Instr ins;
    try {
      ins = isa::decode(std::span<const uint8_t>(buf, 4), pc, m.st.mode);
    } catch (const Error& e) {
      if (e.code() == Errc::UnknownEncoding)
        fail(Errc::UndefinedInstruction, "at " + hex(pc));
      throw;
    }
    pc = m.exec(ins);
  }
  m.st.regs[isa::PC] = pc;
  return m.st;
}

Outcome run_outcome(const BinaryImage& img, const TestVector& vec) {
  Outcome o;
  try {
    MachineState st = interpret(img, vec);
    for (uint8_t r : vec.out_regs) o.out_regs[r] = st.regs[r];
    auto byte_at = [&](uint32_t a) -> uint8_t {
      auto it = st.mem.find(a);
      if (it != st.mem.end()) return it->second;
      return img.is_mapped(a) ? img.read(a, 1)[0] : 0;
    };
    for (uint32_t a : vec.out_memory) o.out_memory[a] = byte_at(a);
    for (const auto& s : vec.out_syms) {
      auto addr = img.symbol_addr(s);
      uint32_t v = 0;
      if (addr)
        for (int i = 0; i < 4; ++i) v |= uint32_t(byte_at(*addr + i)) << (8 * i);
      o.out_globals[s] = v;
    }
    o.trace = st.trace;
  } catch (const Error& e) {
    o.faulted = true;
    o.fault = e.code();
  }
  return o;
}

namespace {

std::optional<std::string> cstr_at(const BinaryImage& img, uint32_t addr) {
  if (!img.is_mapped(addr)) return std::nullopt;
  std::string s;
  for (uint32_t i = 0; i < 256; ++i) {
    if (!img.is_mapped(addr + i)) return std::nullopt;
    uint8_t b = img.read(addr + i, 1)[0];
    if (b == 0) return s;
    s.push_back(char(b));
  }
  return std::nullopt;
}

// Pointer arguments may legitimately differ between layouts as long as they
// name the same string.
bool args_equivalent(const BinaryImage& ia, uint32_t a, const BinaryImage& ib, uint32_t b) {
  if (a == b) return true;
  auto sa = cstr_at(ia, a), sb = cstr_at(ib, b);
  return sa && sb && *sa == *sb;
}

}  // namespace

std::vector<Verdict> differential_check(const BinaryImage& patched, const BinaryImage& fixed,
                                        const std::vector<TestVector>& vectors) {
  std::vector<Verdict> out;
  for (const auto& vec : vectors) {
    Outcome a = run_outcome(patched, vec);
    TestVector alt = vec;
    if (vec.entry_alt) alt.entry = vec.entry_alt;
    Outcome b = run_outcome(fixed, alt);

    Verdict v;
    v.vector_name = vec.name;
    std::ostringstream os;
    if (a.faulted != b.faulted || (a.faulted && a.fault != b.fault)) {
      os << "fault mismatch: " << (a.faulted ? errc_name(a.fault) : "none") << " vs "
         << (b.faulted ? errc_name(b.fault) : "none");
    } else if (!a.faulted) {
      for (const auto& [r, x] : a.out_regs)
        if (b.out_regs.at(r) != x) {
          os << "r" << int(r) << ": " << hex(x) << " vs " << hex(b.out_regs.at(r)) << "; ";
          break;
        }
      for (const auto& [ad, x] : a.out_memory)
        if (b.out_memory.at(ad) != x) {
          os << "mem " << hex(ad) << ": " << int(x) << " vs " << int(b.out_memory.at(ad));
          break;
        }
      for (const auto& [sym, x] : a.out_globals)
        if (b.out_globals.at(sym) != x) {
          os << sym << ": " << hex(x) << " vs " << hex(b.out_globals.at(sym));
          break;
        }
      if (a.trace.size() != b.trace.size()) {
        os << "call trace length " << a.trace.size() << " vs " << b.trace.size();
      } else {
        for (size_t i = 0; i < a.trace.size() && os.str().empty(); ++i) {
          if (a.trace[i].callee != b.trace[i].callee) {
            os << "call " << i << ": " << a.trace[i].callee << " vs " << b.trace[i].callee;
            break;
          }
          for (int k = 0; k < 4; ++k)
            if (!args_equivalent(patched, a.trace[i].args[k], fixed, b.trace[i].args[k])) {
              os << "call " << i << " arg " << k << ": " << hex(a.trace[i].args[k]) << " vs "
                 << hex(b.trace[i].args[k]);
              break;
            }
        }
      }
    }
    v.pass = os.str().empty();
    v.detail = os.str();
    out.push_back(v);
  }
  return out;
}

}  // namespace mend::interp
