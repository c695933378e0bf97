#include "mend/flow.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <sstream>

namespace mend::flow {

using isa::Mnemonic;
using isa::Operand;

const BasicBlock* Cfg::block_at(uint32_t start) const {
  auto it = blocks.find(start);
  return it == blocks.end() ? nullptr : &it->second;
}

const BasicBlock* Cfg::block_containing(uint32_t addr) const {
  auto it = blocks.upper_bound(addr);
  if (it == blocks.begin()) return nullptr;
  --it;
  return (addr >= it->second.start && addr < it->second.end()) ? &it->second : nullptr;
}

const Instr* Cfg::instr_at(uint32_t addr) const {
  const BasicBlock* b = block_containing(addr);
  if (!b) return nullptr;
  for (const auto& i : b->instrs)
    if (i.addr == addr) return &i;
  return nullptr;
}

std::string MemLoc::text() const {
  switch (kind) {
    case Kind::Register: return key == FLAGS_REG ? "flags" : "r" + std::to_string(key);
    case Kind::StackSlot: return "stack[" + std::to_string(key) + "]";
    case Kind::Global: return "global:" + hex(uint32_t(key));
    case Kind::HeapSummary: return "heap";
  }
  return "?";
}

std::vector<DfgEdge> Dfg::defs_reaching(uint32_t use_addr, const MemLoc& loc) const {
  std::vector<DfgEdge> out;
  for (const auto& e : edges)
    if (e.use_addr == use_addr && e.loc == loc) out.push_back(e);
  return out;
}

namespace {

bool is_terminator(const Instr& ins) {
  switch (ins.mnemonic()) {
    case Mnemonic::B: return true;
    case Mnemonic::Bx: return true;
    case Mnemonic::Udf: return true;
    case Mnemonic::Pop:
      return (ins.operands().at(0).value >> isa::PC) & 1;
    default: return false;
  }
}

std::optional<uint32_t> branch_target(const Instr& ins) {
  for (const auto& o : ins.operands())
    if (o.kind == Operand::Kind::PcRelTarget) return o.value;
  return std::nullopt;
}

bool is_call(const Instr& ins) {
  return ins.mnemonic() == Mnemonic::Bl || ins.mnemonic() == Mnemonic::Blx;
}

}  // namespace

Cfg build_cfg(const BinaryImage& img, uint32_t entry, Mode mode) {
  std::map<uint32_t, Instr> instrs;
  std::set<uint32_t> leaders{entry};
  std::deque<uint32_t> work{entry};
  std::set<uint32_t> swept;

  while (!work.empty()) {
    uint32_t cur = work.front();
    work.pop_front();
    if (swept.count(cur)) continue;
    while (true) {
      if (swept.count(cur)) break;
      swept.insert(cur);
      Instr ins;
      try {
        ins = isa::decode(img.view(cur, 4), cur, mode);
      } catch (const Error& e) {
        if (e.code() == Errc::UnknownEncoding || e.code() == Errc::Misaligned ||
            e.code() == Errc::UnmappedAddress)
          fail(Errc::DecodeFailure, std::string(e.what()) + " while sweeping from " + hex(entry));
        throw;
      }
      instrs[cur] = ins;

      if (ins.mnemonic() == Mnemonic::B) {
        uint32_t t = *branch_target(ins);
        leaders.insert(t);
        work.push_back(t);
        if (ins.spec.cond != isa::Cond::Al) {
          leaders.insert(cur + ins.width);
          cur += ins.width;
          continue;
        }
        break;
      }
      if (ins.mnemonic() == Mnemonic::Bx) {
        if (ins.operands().at(0).value != isa::LR)
          fail(Errc::IndirectUnresolved, "bx r" + std::to_string(ins.operands()[0].value) +
                                             " at " + hex(cur));
        break;
      }
      if (ins.mnemonic() == Mnemonic::Blx &&
          ins.operands().at(0).kind == Operand::Kind::Reg)
        fail(Errc::IndirectUnresolved, "blx reg at " + hex(cur));
      if (ins.mnemonic() == Mnemonic::Pop && ((ins.operands().at(0).value >> isa::PC) & 1))
        break;
      if (ins.mnemonic() == Mnemonic::Udf) break;
      if (ins.mnemonic() == Mnemonic::Mov && !ins.operands().empty() &&
          ins.operands()[0].kind == Operand::Kind::Reg && ins.operands()[0].value == isa::PC)
        fail(Errc::IndirectUnresolved, "write to pc at " + hex(cur));
      cur += ins.width;
    }
  }

  Cfg cfg;
  cfg.entry = entry;
  cfg.mode = mode;

  // Partition the decoded instructions into blocks at leaders and terminators.
  uint32_t next_id = 0;
  BasicBlock blk;
  auto flush = [&](Terminator t) {
    if (blk.instrs.empty()) return;
    blk.terminator = t;
    blk.id = next_id++;
    cfg.blocks[blk.start] = blk;
    blk = BasicBlock{};
  };
  uint32_t prev_end = 0;
  for (const auto& [addr, ins] : instrs) {
    bool contiguous = !blk.instrs.empty() && addr == prev_end;
    if (!contiguous || leaders.count(addr)) flush(Terminator::Fallthrough);
    if (blk.instrs.empty()) blk.start = addr;
    blk.instrs.push_back(ins);
    prev_end = addr + ins.width;
    if (is_terminator(ins)) {
      Terminator t = Terminator::Jump;
      if (ins.mnemonic() == Mnemonic::Bx || ins.mnemonic() == Mnemonic::Udf ||
          ins.mnemonic() == Mnemonic::Pop)
        t = Terminator::Return;
      flush(t);
    }
  }
  flush(Terminator::Fallthrough);

  cfg.lo = cfg.blocks.begin()->first;
  cfg.hi = 0;
  for (const auto& [a, b] : cfg.blocks) cfg.hi = std::max(cfg.hi, b.end());

  for (const auto& [a, b] : cfg.blocks) {
    const Instr& last = b.instrs.back();
    for (const auto& i : b.instrs)
      if (is_call(i))
        if (auto t = branch_target(i)) cfg.edges.insert({b.start, *t, EdgeKind::Call});
    if (last.mnemonic() == Mnemonic::B) {
      cfg.edges.insert({b.start, *branch_target(last), EdgeKind::Jump});
      if (last.spec.cond != isa::Cond::Al && cfg.blocks.count(b.end()))
        cfg.edges.insert({b.start, b.end(), EdgeKind::Fallthrough});
    } else if (b.terminator == Terminator::Fallthrough && cfg.blocks.count(b.end())) {
      cfg.edges.insert({b.start, b.end(), EdgeKind::Fallthrough});
    }
  }
  return cfg;
}

DefUse def_use(const Instr& ins, const std::optional<int32_t>& sp_offset) {
  DefUse du;
  const auto& ops = ins.operands();
  auto reg = [](const Operand& o) { return MemLoc::reg(uint8_t(o.value)); };
  auto use_op2 = [&](const Operand& o) {
    if (o.kind == Operand::Kind::Reg || o.kind == Operand::Kind::ShiftedReg)
      if (o.value != isa::PC) du.uses.push_back(MemLoc::reg(uint8_t(o.value)));
  };
  auto mem_loc = [&](uint32_t rn, int32_t imm) -> MemLoc {
    if (rn == isa::SP && sp_offset) return MemLoc::stack(*sp_offset + imm);
    return MemLoc::heap();
  };

  switch (ins.mnemonic()) {
    case Mnemonic::Push: {
      uint32_t list = ops.at(0).value;
      du.uses.push_back(MemLoc::reg(isa::SP));
      du.defs.push_back(MemLoc::reg(isa::SP));
      du.writes_mem = true;
      int32_t off = sp_offset ? *sp_offset : 0;
      int slot = -int(std::popcount(list)) * 4;
      for (uint8_t r = 0; r < 16; ++r)
        if ((list >> r) & 1) {
          du.uses.push_back(MemLoc::reg(r));
          if (sp_offset) du.defs.push_back(MemLoc::stack(off + slot)), slot += 4;
        }
      break;
    }
    case Mnemonic::Pop: {
      uint32_t list = ops.at(0).value;
      du.uses.push_back(MemLoc::reg(isa::SP));
      du.defs.push_back(MemLoc::reg(isa::SP));
      du.reads_mem = true;
      int32_t off = sp_offset ? *sp_offset : 0;
      int slot = 0;
      for (uint8_t r = 0; r < 16; ++r)
        if ((list >> r) & 1) {
          du.defs.push_back(MemLoc::reg(r));
          if (sp_offset) du.uses.push_back(MemLoc::stack(off + slot));
          slot += 4;
        }
      break;
    }
    case Mnemonic::Mov:
      du.defs.push_back(reg(ops.at(0)));
      use_op2(ops.at(1));
      if (ins.spec.set_flags) du.defs.push_back(MemLoc::reg(FLAGS_REG));
      break;
    case Mnemonic::Movw:
      du.defs.push_back(reg(ops.at(0)));
      break;
    case Mnemonic::Movt:
      du.uses.push_back(reg(ops.at(0)));
      du.defs.push_back(reg(ops.at(0)));
      break;
    case Mnemonic::Add:
    case Mnemonic::Sub:
    case Mnemonic::And:
    case Mnemonic::Orr:
    case Mnemonic::Eor: {
      du.defs.push_back(reg(ops.at(0)));
      if (ops.size() == 2) {
        du.uses.push_back(reg(ops[0]));
        use_op2(ops[1]);
      } else {
        use_op2(ops.at(1));
        use_op2(ops.at(2));
      }
      if (ins.spec.set_flags) du.defs.push_back(MemLoc::reg(FLAGS_REG));
      break;
    }
    case Mnemonic::Cmp:
      use_op2(ops.at(0));
      use_op2(ops.at(1));
      du.defs.push_back(MemLoc::reg(FLAGS_REG));
      break;
    case Mnemonic::Lsl:
    case Mnemonic::Lsr:
      du.defs.push_back(reg(ops.at(0)));
      use_op2(ops.at(1));
      if (ins.spec.set_flags) du.defs.push_back(MemLoc::reg(FLAGS_REG));
      break;
    case Mnemonic::Ldr:
    case Mnemonic::Ldrb: {
      du.defs.push_back(reg(ops.at(0)));
      du.reads_mem = true;
      if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad) {
        du.uses.push_back(MemLoc::global(ops[1].value));
      } else if (ops.at(2).kind == Operand::Kind::Reg) {
        use_op2(ops[1]);
        use_op2(ops[2]);
        du.uses.push_back(MemLoc::heap());
      } else {
        use_op2(ops[1]);
        du.uses.push_back(mem_loc(ops[1].value, int32_t(ops[2].value)));
      }
      break;
    }
    case Mnemonic::Str:
    case Mnemonic::Strb: {
      du.uses.push_back(reg(ops.at(0)));
      du.writes_mem = true;
      if (ops.at(2).kind == Operand::Kind::Reg) {
        use_op2(ops[1]);
        use_op2(ops[2]);
        du.defs.push_back(MemLoc::heap());
      } else {
        use_op2(ops[1]);
        du.defs.push_back(mem_loc(ops[1].value, int32_t(ops[2].value)));
      }
      break;
    }
    case Mnemonic::Adr:
      du.defs.push_back(reg(ops.at(0)));
      break;
    case Mnemonic::B:
      if (ins.spec.cond != isa::Cond::Al) du.uses.push_back(MemLoc::reg(FLAGS_REG));
      break;
    case Mnemonic::Bl:
    case Mnemonic::Blx:
      for (uint8_t r = 0; r < 4; ++r) du.uses.push_back(MemLoc::reg(r));
      for (uint8_t r = 0; r < 4; ++r) du.defs.push_back(MemLoc::reg(r));
      du.defs.push_back(MemLoc::reg(12));
      du.defs.push_back(MemLoc::reg(isa::LR));
      if (!ops.empty() && ops[0].kind == Operand::Kind::Reg)
        du.uses.push_back(reg(ops[0]));
      break;
    case Mnemonic::Bx:
      du.uses.push_back(reg(ins.operands().at(0)));
      if (ins.operands()[0].value == isa::LR) du.uses.push_back(MemLoc::reg(0));
      break;
    case Mnemonic::Nop:
    case Mnemonic::Udf:
      break;
  }
  return du;
}

std::map<uint32_t, int32_t> track_stack(const Cfg& cfg) {
  // Forward propagation of the SP delta from function entry; blocks where the
  // delta is unknown or inconsistent at a join are left out of the map.
  std::map<uint32_t, std::optional<int32_t>> block_in;
  block_in[cfg.entry] = 0;
  std::map<uint32_t, int32_t> at_instr;

  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [start, blk] : cfg.blocks) {
      auto it = block_in.find(start);
      if (it == block_in.end()) continue;
      std::optional<int32_t> off = it->second;
      for (const auto& ins : blk.instrs) {
        if (off) at_instr[ins.addr] = *off;
        else at_instr.erase(ins.addr);
        const auto& ops = ins.operands();
        switch (ins.mnemonic()) {
          case Mnemonic::Push:
            if (off) *off -= 4 * std::popcount(ops.at(0).value);
            break;
          case Mnemonic::Pop:
            if (off) *off += 4 * std::popcount(ops.at(0).value);
            break;
          case Mnemonic::Add:
          case Mnemonic::Sub: {
            bool to_sp = !ops.empty() && ops[0].kind == Operand::Kind::Reg &&
                         ops[0].value == isa::SP;
            if (!to_sp) break;
            if (ops.size() == 2 && ops[1].kind == Operand::Kind::Imm && off) {
              *off += (ins.mnemonic() == Mnemonic::Add ? 1 : -1) * int32_t(ops[1].value);
            } else {
              off = std::nullopt;
            }
            break;
          }
          default:
            if (!ops.empty() && ops[0].kind == Operand::Kind::Reg && ops[0].value == isa::SP)
              off = std::nullopt;
        }
      }
      for (const auto& e : cfg.edges) {
        if (e.src != start || e.kind == EdgeKind::Call) continue;
        auto jt = block_in.find(e.dst);
        if (jt == block_in.end()) {
          block_in[e.dst] = off;
          changed = true;
        } else if (jt->second != off) {
          if (jt->second.has_value()) {
            jt->second = std::nullopt;
            changed = true;
          }
        }
      }
    }
  }
  return at_instr;
}

namespace {

// Intra-block constant propagation; literal loads pull values out of the image.
void propagate_constants(const BinaryImage& img, const Cfg& cfg, Dfg& dfg) {
  for (const auto& [start, blk] : cfg.blocks) {
    std::map<uint8_t, uint32_t> known;
    for (const auto& ins : blk.instrs) {
      const auto& ops = ins.operands();
      auto get = [&](const Operand& o) -> std::optional<uint32_t> {
        if (o.kind == Operand::Kind::Imm) return o.value;
        if (o.kind == Operand::Kind::Reg) {
          if (o.value == isa::PC) return isa::pc_value(ins.addr, ins.mode);
          auto it = known.find(uint8_t(o.value));
          if (it != known.end()) return it->second;
        }
        return std::nullopt;
      };
      auto set = [&](uint8_t r, std::optional<uint32_t> v) {
        if (v) known[r] = *v;
        else known.erase(r);
      };
      switch (ins.mnemonic()) {
        case Mnemonic::Mov:
          set(uint8_t(ops.at(0).value), get(ops.at(1)));
          break;
        case Mnemonic::Movw:
          set(uint8_t(ops.at(0).value), ops.at(1).value);
          break;
        case Mnemonic::Movt: {
          auto cur = get(Operand::reg(uint8_t(ops.at(0).value)));
          if (cur) set(uint8_t(ops[0].value), (*cur & 0xffffu) | (ops.at(1).value << 16));
          else set(uint8_t(ops[0].value), std::nullopt);
          break;
        }
        case Mnemonic::Add:
        case Mnemonic::Sub: {
          bool sub = ins.mnemonic() == Mnemonic::Sub;
          std::optional<uint32_t> a, b;
          if (ops.size() == 2) {
            a = get(Operand::reg(uint8_t(ops[0].value)));
            b = get(ops[1]);
          } else {
            a = get(ops.at(1));
            b = get(ops.at(2));
          }
          if (a && b) set(uint8_t(ops[0].value), sub ? *a - *b : *a + *b);
          else set(uint8_t(ops[0].value), std::nullopt);
          break;
        }
        case Mnemonic::Adr:
          set(uint8_t(ops.at(0).value), ops.at(1).value);
          break;
        case Mnemonic::Ldr:
          if (ops.size() == 2 && ops[1].kind == Operand::Kind::PcRelLoad &&
              img.is_mapped(ops[1].value, 4)) {
            set(uint8_t(ops[0].value), img.read_u32(ops[1].value));
          } else {
            set(uint8_t(ops[0].value), std::nullopt);
          }
          break;
        case Mnemonic::Bl:
        case Mnemonic::Blx:
          for (uint8_t r : {0, 1, 2, 3, 12}) known.erase(r);
          known.erase(isa::LR);
          break;
        case Mnemonic::Pop:
          for (uint8_t r = 0; r < 16; ++r)
            if ((ops.at(0).value >> r) & 1) known.erase(r);
          break;
        default:
          if (!ops.empty() && ops[0].kind == Operand::Kind::Reg &&
              ins.mnemonic() != Mnemonic::Cmp && ins.mnemonic() != Mnemonic::Str &&
              ins.mnemonic() != Mnemonic::Strb && ins.mnemonic() != Mnemonic::B &&
              ins.mnemonic() != Mnemonic::Bx)
            known.erase(uint8_t(ops[0].value));
      }
      dfg.known_after[ins.addr] = known;
    }
  }
}

}  // namespace

Dfg build_dfg(const BinaryImage& img, const Cfg& cfg) {
  Dfg dfg;
  auto sp = track_stack(cfg);

  // Block-level reaching definitions over memlocs.
  using State = std::map<MemLoc, std::set<uint32_t>>;
  std::map<uint32_t, State> in;
  in[cfg.entry] = {};

  auto transfer = [&](const BasicBlock& blk, State st, bool record) {
    for (const auto& ins : blk.instrs) {
      std::optional<int32_t> off;
      if (auto it = sp.find(ins.addr); it != sp.end()) off = it->second;
      DefUse du = def_use(ins, off);
      if (record) {
        for (const auto& u : du.uses) {
          auto it = st.find(u);
          if (it != st.end())
            for (uint32_t d : it->second) dfg.edges.insert({d, ins.addr, u});
        }
      }
      for (const auto& d : du.defs) st[d] = {ins.addr};
    }
    return st;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [start, blk] : cfg.blocks) {
      auto it = in.find(start);
      if (it == in.end()) continue;
      State out = transfer(blk, it->second, false);
      for (const auto& e : cfg.edges) {
        if (e.src != start || e.kind == EdgeKind::Call) continue;
        State& dst = in[e.dst];
        for (const auto& [loc, defs] : out) {
          auto& cur = dst[loc];
          size_t before = cur.size();
          cur.insert(defs.begin(), defs.end());
          if (cur.size() != before) changed = true;
        }
      }
    }
  }
  for (const auto& [start, blk] : cfg.blocks) {
    auto it = in.find(start);
    if (it != in.end()) transfer(blk, it->second, true);
  }

  propagate_constants(img, cfg, dfg);
  return dfg;
}

std::vector<Reference> extract_references(const BinaryImage& img, const Cfg& cfg,
                                          const Dfg& dfg) {
  std::vector<Reference> refs;

  for (const auto& [start, blk] : cfg.blocks) {
    for (const auto& ins : blk.instrs) {
      if (is_call(ins)) {
        if (auto t = branch_target(ins)) {
          Reference r;
          r.kind = Reference::Kind::Control;
          r.src = ins.addr;
          r.dst = *t;
          r.dest_in_function = cfg.in_function(*t);
          refs.push_back(r);
        }
      }
    }
    const Instr& last = blk.instrs.back();
    if (last.mnemonic() == Mnemonic::B) {
      Reference r;
      r.kind = Reference::Kind::Control;
      r.src = last.addr;
      r.dst = *branch_target(last);
      r.dest_in_function = cfg.in_function(r.dst);
      refs.push_back(r);
    }
  }

  // Data references: a recovered constant that names a mapped location
  // outside the function and flows into a later use.
  std::set<std::pair<uint32_t, uint32_t>> seen;
  for (const auto& [start, blk] : cfg.blocks) {
    std::map<uint8_t, uint32_t> prev;
    for (const auto& ins : blk.instrs) {
      auto ka = dfg.known_after.find(ins.addr);
      if (ka == dfg.known_after.end()) continue;
      const auto& ops = ins.operands();
      if (!ops.empty() && ops[0].kind == Operand::Kind::Reg) {
        uint8_t rd = uint8_t(ops[0].value);
        auto it = ka->second.find(rd);
        bool fresh = it != ka->second.end() &&
                     (!prev.count(rd) || prev[rd] != it->second);
        if (fresh) {
          uint32_t v = it->second;
          if (img.is_mapped(v) && !cfg.in_function(v) && !seen.count({ins.addr, v})) {
            for (const auto& e : dfg.edges) {
              if (e.def_addr == ins.addr && e.loc == MemLoc::reg(rd)) {
                Reference r;
                r.kind = Reference::Kind::Data;
                r.src = ins.addr;
                r.dst = e.use_addr;
                r.memloc = MemLoc::global(v);
                r.dest_in_function = false;
                refs.push_back(r);
                seen.insert({ins.addr, v});
                break;
              }
            }
          }
        }
      }
      prev = ka->second;
    }
  }

  std::sort(refs.begin(), refs.end());
  return refs;
}

std::string dump_graphs(const Cfg& cfg, const Dfg& dfg) {
  std::ostringstream os;
  os << "cfg entry=" << hex(cfg.entry) << " range=[" << hex(cfg.lo) << "," << hex(cfg.hi)
     << ")\n";
  for (const auto& [start, blk] : cfg.blocks) {
    os << "  block " << hex(start) << ":\n";
    for (const auto& i : blk.instrs) os << "    " << hex(i.addr) << "  " << i.text() << "\n";
  }
  for (const auto& e : cfg.edges) {
    const char* k = e.kind == EdgeKind::Jump ? "jump"
                    : e.kind == EdgeKind::Call ? "call"
                                               : "fall";
    os << "  edge " << hex(e.src) << " -> " << hex(e.dst) << " [" << k << "]\n";
  }
  for (const auto& e : dfg.edges)
    os << "  dfg " << hex(e.def_addr) << " -> " << hex(e.use_addr) << " (" << e.loc.text()
       << ")\n";
  return os.str();
}

}  // namespace mend::flow
