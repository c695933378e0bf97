#include "mend/slice.hpp"

#include <bit>
#include <sstream>

namespace mend::slice {

using flow::DefUse;
using isa::Instr;
using isa::Mnemonic;
using isa::Operand;

namespace {

uint32_t placed(const std::map<uint32_t, uint32_t>& placement, uint32_t addr) {
  auto it = placement.find(addr);
  return it == placement.end() ? addr : it->second;
}

struct Builder {
  const BinaryImage& img;
  const Cfg& cfg;
  const Dfg& dfg;
  const std::map<uint32_t, uint32_t>& placement;
  std::map<uint32_t, int32_t> sp;

  Slice out;
  uint32_t next_var = 1;
  std::map<std::pair<uint32_t, MemLoc>, uint32_t> vars;  // (def addr, loc) -> var

  uint32_t fresh(uint32_t def_addr, const MemLoc& loc) {
    uint32_t v = next_var++;
    out.var_names[v] = loc.text() + "@" + hex(def_addr);
    return v;
  }

  // Value of `loc` as observed by the instruction at use_addr.
  IrOperand resolve_use(uint32_t use_addr, const MemLoc& loc) {
    auto defs = dfg.defs_reaching(use_addr, loc);
    if (defs.empty()) {
      if (loc.kind == MemLoc::Kind::Global) return IrOperand::slot(uint32_t(loc.key));
      fail(Errc::SliceEscapes, "no tracked definition of " + loc.text() + " reaching " +
                                   hex(use_addr));
    }
    if (defs.size() > 1)
      fail(Errc::SliceEscapes, "multiple definitions of " + loc.text() + " reach " +
                                   hex(use_addr));
    return IrOperand::var(emit_def(defs[0].def_addr, loc));
  }

  uint32_t emit_def(uint32_t def_addr, const MemLoc& loc) {
    auto key = std::make_pair(def_addr, loc);
    if (auto it = vars.find(key); it != vars.end()) return it->second;

    const Instr* ip = cfg.instr_at(def_addr);
    if (!ip) fail(Errc::SliceEscapes, "definition outside function at " + hex(def_addr));
    const Instr& ins = *ip;
    uint32_t at = placed(placement, def_addr);
    const auto& ops = ins.operands();

    uint32_t v = fresh(def_addr, loc);
    vars[key] = v;
    IrStmt st;
    st.dst = v;

    auto reg_use = [&](uint8_t r) { return resolve_use(def_addr, MemLoc::reg(r)); };
    auto op2 = [&](const Operand& o, bool negate) -> IrOperand {
      if (o.kind == Operand::Kind::Imm)
        return IrOperand::constant(negate ? uint32_t(0) - o.value : o.value);
      if (o.kind == Operand::Kind::Reg) {
        if (o.value == isa::PC)
          return IrOperand::constant(negate ? uint32_t(0) - isa::pc_value(at, ins.mode)
                                            : isa::pc_value(at, ins.mode));
        if (negate) {
          st.op = IrStmt::Op::Other;
          return IrOperand::constant(0);
        }
        return reg_use(uint8_t(o.value));
      }
      st.op = IrStmt::Op::Other;  // shifted register and friends
      return IrOperand::constant(0);
    };

    switch (ins.mnemonic()) {
      case Mnemonic::Ldr:
        if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad) {
          st.op = IrStmt::Op::Load;
          st.srcs = {IrOperand::slot(ops[1].value)};
        } else if (ops.size() == 3 && ops[1].kind == Operand::Kind::Reg &&
                   ops[1].value == isa::SP && ops[2].kind == Operand::Kind::Imm &&
                   sp.count(def_addr)) {
          st.op = IrStmt::Op::Copy;
          st.srcs = {resolve_use(def_addr,
                                 MemLoc::stack(sp.at(def_addr) + int32_t(ops[2].value)))};
        } else {
          fail(Errc::SliceEscapes, "untracked load at " + hex(def_addr));
        }
        break;
      case Mnemonic::Str:
        // Defines the stack slot; the value is the stored register.
        st.op = IrStmt::Op::Copy;
        st.srcs = {reg_use(uint8_t(ops.at(0).value))};
        break;
      case Mnemonic::Mov:
        st.op = IrStmt::Op::Copy;
        st.srcs = {op2(ops.at(1), false)};
        break;
      case Mnemonic::Movw:
        st.op = IrStmt::Op::Copy;
        st.srcs = {IrOperand::constant(ops.at(1).value)};
        break;
      case Mnemonic::Movt: {
        IrOperand prev = reg_use(uint8_t(ops.at(0).value));
        st.op = IrStmt::Op::Other;
        if (prev.kind == IrOperand::Kind::Var) {
          // movw/movt pairs collapse to one constant when the low half is known
          for (const auto& s : out.stmts)
            for (const auto& i : s.ir)
              if (i.dst == prev.id && i.op == IrStmt::Op::Copy && i.srcs.size() == 1 &&
                  i.srcs[0].kind == IrOperand::Kind::Const) {
                st.op = IrStmt::Op::Copy;
                st.srcs = {IrOperand::constant((i.srcs[0].value & 0xffffu) |
                                               (ops.at(1).value << 16))};
              }
        }
        break;
      }
      case Mnemonic::Add:
      case Mnemonic::Sub: {
        bool sub = ins.mnemonic() == Mnemonic::Sub;
        st.op = IrStmt::Op::IntAdd;
        if (ops.size() == 2) {
          st.srcs = {reg_use(uint8_t(ops[0].value)), op2(ops[1], sub)};
        } else {
          st.srcs = {op2(ops.at(1), false), op2(ops.at(2), sub)};
        }
        break;
      }
      case Mnemonic::Adr: {
        uint32_t delta = ops.at(1).value - isa::pc_align4(ins.addr, ins.mode);
        st.op = IrStmt::Op::Copy;
        st.srcs = {IrOperand::constant(isa::pc_align4(at, ins.mode) + delta)};
        break;
      }
      case Mnemonic::Push: {
        // loc is the stack slot; recover which register landed there.
        uint32_t list = ops.at(0).value;
        if (!sp.count(def_addr)) fail(Errc::SliceEscapes, "untracked push at " + hex(def_addr));
        int32_t base = sp.at(def_addr) - 4 * std::popcount(list);
        std::optional<uint8_t> src;
        int slot = 0;
        for (uint8_t r = 0; r < 16; ++r)
          if ((list >> r) & 1) {
            if (MemLoc::stack(base + slot) == loc) src = r;
            slot += 4;
          }
        if (!src) fail(Errc::SliceEscapes, "push slot mismatch at " + hex(def_addr));
        st.op = IrStmt::Op::Copy;
        st.srcs = {reg_use(*src)};
        break;
      }
      case Mnemonic::Pop: {
        uint32_t list = ops.at(0).value;
        if (!sp.count(def_addr)) fail(Errc::SliceEscapes, "untracked pop at " + hex(def_addr));
        int32_t base = sp.at(def_addr);
        std::optional<int32_t> slot_off;
        int slot = 0;
        for (uint8_t r = 0; r < 16; ++r)
          if ((list >> r) & 1) {
            if (MemLoc::reg(r) == loc) slot_off = base + slot;
            slot += 4;
          }
        if (!slot_off) fail(Errc::SliceEscapes, "pop reg mismatch at " + hex(def_addr));
        st.op = IrStmt::Op::Copy;
        st.srcs = {resolve_use(def_addr, MemLoc::stack(*slot_off))};
        break;
      }
      case Mnemonic::Bl:
      case Mnemonic::Blx:
        fail(Errc::SliceEscapes, "value produced by call at " + hex(def_addr));
      default:
        st.op = IrStmt::Op::Other;
    }

    out.stmts.push_back({ins, {st}});
    return v;
  }
};

}  // namespace

Slice backward_slice(const BinaryImage& img, const Cfg& cfg, const Dfg& dfg,
                     const Reference& ref, const std::map<uint32_t, uint32_t>& placement) {
  if (ref.kind != Reference::Kind::Data)
    fail(Errc::SliceEscapes, "slice requested for a control reference");
  Builder b{img, cfg, dfg, placement, flow::track_stack(cfg), {}, 1, {}};

  // The register that carries the address from ref.src into ref.dst.
  std::optional<MemLoc> carrier;
  for (const auto& e : dfg.edges)
    if (e.def_addr == ref.src && e.use_addr == ref.dst &&
        e.loc.kind == MemLoc::Kind::Register) {
      carrier = e.loc;
      break;
    }
  if (!carrier)
    fail(Errc::SliceEscapes, "no register data-flow from " + hex(ref.src) + " to " +
                                 hex(ref.dst));
  b.out.target_var = b.emit_def(ref.src, *carrier);
  return std::move(b.out);
}

EquationSystem build_equations(const Slice& s, uint32_t required) {
  if (s.stmts.empty()) fail(Errc::NonAffine, "empty slice");
  EquationSystem sys;
  sys.target_var = s.target_var;
  sys.required = required;
  sys.var_names = s.var_names;
  for (const auto& st : s.stmts)
    for (const auto& ir : st.ir) {
      switch (ir.op) {
        case IrStmt::Op::Copy:
        case IrStmt::Op::Load:
          if (ir.srcs.size() != 1) fail(Errc::NonAffine, "malformed copy");
          break;
        case IrStmt::Op::IntAdd:
          if (ir.srcs.size() != 2) fail(Errc::NonAffine, "malformed add");
          break;
        case IrStmt::Op::Other:
          fail(Errc::NonAffine, "unsupported operation in slice");
      }
      sys.equations.push_back({ir.dst, ir.op, ir.srcs});
    }
  return sys;
}

SolveResult solve(const EquationSystem& sys) {
  // Each variable as an affine form: sum(coeff * slot) + constant, mod 2^32.
  struct Form {
    std::map<uint32_t, uint32_t> coeffs;  // slot vaddr -> coefficient
    uint32_t c = 0;
  };
  std::map<uint32_t, Form> forms;

  auto operand_form = [&](const IrOperand& o) -> Form {
    switch (o.kind) {
      case IrOperand::Kind::Const: return {{}, o.value};
      case IrOperand::Kind::Slot: return {{{o.id, 1u}}, 0};
      case IrOperand::Kind::Var: {
        auto it = forms.find(o.id);
        if (it == forms.end()) fail(Errc::NonAffine, "use of undefined variable");
        return it->second;
      }
    }
    fail(Errc::NonAffine, "bad operand");
  };

  for (const auto& eq : sys.equations) {
    Form f = operand_form(eq.srcs.at(0));
    if (eq.op == IrStmt::Op::IntAdd) {
      Form g = operand_form(eq.srcs.at(1));
      f.c += g.c;
      for (const auto& [slot, k] : g.coeffs) f.coeffs[slot] += k;
    }
    forms[eq.dst] = f;
  }

  auto it = forms.find(sys.target_var);
  if (it == forms.end()) fail(Errc::NonAffine, "target variable never defined");
  Form t = it->second;

  std::vector<std::pair<uint32_t, uint32_t>> free;  // slot, coeff
  for (const auto& [slot, k] : t.coeffs)
    if (k != 0) free.push_back({slot, k});

  SolveResult res;
  uint32_t rhs = sys.required - t.c;
  if (free.empty()) {
    if (rhs != 0)
      fail(Errc::Inconsistent, "no free slot and constraint off by " + hex(rhs));
    return res;
  }
  if (free.size() > 1) fail(Errc::Underdetermined, "multiple free literal slots");

  auto [slot, k] = free[0];
  int tz = std::countr_zero(k);
  if (tz > 0 && (rhs & ((1u << tz) - 1)) != 0)
    fail(Errc::Inconsistent, "coefficient parity excludes a solution");
  uint32_t k_odd = k >> tz;
  uint32_t r_red = rhs >> tz;
  // Inverse of an odd number mod 2^32 by Newton iteration.
  uint32_t inv = k_odd;
  for (int i = 0; i < 5; ++i) inv *= 2u - k_odd * inv;
  uint32_t x = r_red * inv;
  if (tz > 0) x &= (0xffffffffu >> tz);
  res.assignments.push_back({MemLoc::global(slot), x});
  return res;
}

namespace {

std::string op_text(const EquationSystem* sys, const Slice* sl, const IrOperand& o) {
  const std::map<uint32_t, std::string>* names =
      sys ? &sys->var_names : (sl ? &sl->var_names : nullptr);
  switch (o.kind) {
    case IrOperand::Kind::Const: return hex(o.value);
    case IrOperand::Kind::Slot: return "[" + hex(o.id) + ":data]";
    case IrOperand::Kind::Var: {
      if (names) {
        auto it = names->find(o.id);
        if (it != names->end()) return it->second;
      }
      return "$t" + std::to_string(o.id);
    }
  }
  return "?";
}

std::string stmt_text(const EquationSystem* sys, const Slice* sl, uint32_t dst,
                      IrStmt::Op op, const std::vector<IrOperand>& srcs) {
  std::string d = op_text(sys, sl, IrOperand::var(dst));
  std::string s = d + " = ";
  switch (op) {
    case IrStmt::Op::Copy: s += "COPY " + op_text(sys, sl, srcs.at(0)); break;
    case IrStmt::Op::Load: s += "COPY " + op_text(sys, sl, srcs.at(0)); break;
    case IrStmt::Op::IntAdd:
      s += "INT_ADD " + op_text(sys, sl, srcs.at(0)) + ", " + op_text(sys, sl, srcs.at(1));
      break;
    case IrStmt::Op::Other: s += "<unsupported>"; break;
  }
  return s;
}

}  // namespace

std::string dump(const Slice& s) {
  std::ostringstream os;
  for (const auto& st : s.stmts) {
    os << hex(st.instr.addr) << "  " << st.instr.text() << "\n";
    for (const auto& ir : st.ir)
      os << "    " << stmt_text(nullptr, &s, ir.dst, ir.op, ir.srcs) << "\n";
  }
  os << "target: " << op_text(nullptr, &s, IrOperand::var(s.target_var)) << "\n";
  return os.str();
}

std::string dump(const EquationSystem& sys) {
  std::ostringstream os;
  for (const auto& eq : sys.equations)
    os << stmt_text(&sys, nullptr, eq.dst, eq.op, eq.srcs) << "\n";
  os << op_text(&sys, nullptr, IrOperand::var(sys.target_var)) << " = " << hex(sys.required)
     << "\n";
  return os.str();
}

}  // namespace mend::slice
