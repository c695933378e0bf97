#include "mend/reassemble.hpp"

#include <algorithm>

namespace mend::reassemble {

using flow::Reference;
using isa::Instr;
using isa::InstrSpec;
using isa::Mnemonic;
using isa::Mode;
using isa::Operand;

namespace {

constexpr uint32_t kDataCap = 4096;

struct Unit {
  uint32_t old_addr = 0;  // patch-side (or absorbed vuln) address
  std::vector<InstrSpec> specs;
  std::vector<uint8_t> min_w;              // sticky minimum widths, grow only
  std::vector<uint8_t> cur_w;              // widths from the last round
  std::optional<uint32_t> in_region_dst;   // old address resolved via placement
  std::optional<uint32_t> pending_entry;   // patch entry of a queued function
  uint32_t placed = 0;
};

bool has_target(const InstrSpec& s) {
  for (const auto& o : s.operands)
    if (o.kind == Operand::Kind::PcRelTarget) return true;
  return false;
}

void set_target(InstrSpec& s, uint32_t t) {
  for (auto& o : s.operands)
    if (o.kind == Operand::Kind::PcRelTarget) o.value = t;
}

bool has_literal(const InstrSpec& s) {
  for (const auto& o : s.operands)
    if (o.kind == Operand::Kind::PcRelLoad) return true;
  return false;
}

}  // namespace

std::vector<uint8_t> load_data_from(const BinaryImage& fixed, uint32_t vaddr) {
  if (!fixed.is_mapped(vaddr)) fail(Errc::UnmappedAddress, "data source " + hex(vaddr));
  std::vector<uint8_t> out;
  for (uint32_t i = 0; i < kDataCap; ++i) {
    uint8_t b = fixed.is_mapped(vaddr + i) ? fixed.read(vaddr + i, 1)[0] : 0;
    uint8_t b2 = fixed.is_mapped(vaddr + i + 1) ? fixed.read(vaddr + i + 1, 1)[0] : 0;
    out.push_back(b);
    if (b == 0 && b2 == 0) return out;
  }
  fail(Errc::CapExceeded, "no terminator within " + std::to_string(kDataCap) + " bytes of " +
                              hex(vaddr));
}

void retarget_branch(BinaryImage& img, uint32_t addr, Mode mode, uint32_t new_target) {
  Instr ins = isa::decode(img.view(addr, 4), addr, mode);
  InstrSpec spec = ins.spec;
  set_target(spec, new_target);
  Instr out = isa::encode(spec, addr, mode, ins.width);
  if (out.width != ins.width) fail(Errc::OutOfRange, "retarget changed width at " + hex(addr));
  img.allow_edits(addr, out.width);
  img.write(addr, std::span<const uint8_t>(out.raw.data(), out.width));
}

PatchPlan plan_and_reassemble(const match::MatchSet& ms, BinaryImage& vuln,
                              const BinaryImage& fixed, PatchRegion& region,
                              const flow::Cfg* vuln_cfg, const flow::Cfg& patch_cfg,
                              const flow::Dfg& patch_dfg,
                              const std::vector<Reference>& refs_patch,
                              const ReassembleOptions& opt) {
  PatchPlan plan;
  Mode mode = patch_cfg.mode;

  std::vector<const flow::BasicBlock*> emit_blocks;
  if (opt.whole_function) {
    for (const auto& [s, b] : patch_cfg.blocks) emit_blocks.push_back(&b);
  } else {
    for (uint32_t s : ms.patch_region) emit_blocks.push_back(patch_cfg.block_at(s));
  }
  if (emit_blocks.empty()) {
    plan.noop = true;
    return plan;
  }
  if (!opt.whole_function) {
    if (!vuln_cfg) fail(Errc::FunctionNotFound, "no vulnerable-side flow graph");
    if (vuln_cfg->mode != mode)
      fail(Errc::NotEncodable, "execution-mode mismatch between the two functions");
  }

  uint32_t region_lo = opt.whole_function ? 0 : ms.patch_region_lo;
  uint32_t region_hi = opt.whole_function ? 0 : ms.patch_region_hi;
  auto in_emitted = [&](uint32_t a) {
    if (opt.whole_function) return patch_cfg.in_function(a);
    return a >= region_lo && a < region_hi;
  };

  // Vulnerable-side interval to replace; absorb following blocks until the
  // redirect branch fits.
  uint32_t vlo = ms.vuln_region_lo, vhi = ms.vuln_region_hi;
  std::vector<Instr> absorbed;
  if (!opt.whole_function) {
    while (vhi - vlo < 4) {
      const flow::BasicBlock* nb = vuln_cfg->block_at(vhi);
      if (!nb)
        fail(Errc::RegionTooSmall, "replaced interval " + hex(vlo) + ".." + hex(vhi) +
                                       " cannot hold a redirect branch");
      for (const auto& i : nb->instrs) absorbed.push_back(i);
      vhi = nb->end();
      plan.notes.push_back("absorbed vuln block at " + hex(nb->start));
    }
  }
  std::optional<uint32_t> return_target;
  if (!opt.whole_function && vhi < vuln_cfg->hi) return_target = vhi;

  // Map a patch-side in-function address outside the region to its vuln twin.
  auto vuln_twin = [&](uint32_t paddr) -> uint32_t {
    const flow::BasicBlock* pb = patch_cfg.block_containing(paddr);
    if (!pb) fail(Errc::OutOfRange, "branch into unknown block " + hex(paddr));
    auto v = ms.vuln_for(pb->start);
    if (!v)
      fail(Errc::OutOfRange, "branch target " + hex(paddr) + " has no vulnerable-side twin");
    return *v + (paddr - pb->start);
  };

  auto matched_ref = [&](const Reference& needle) -> const Reference* {
    auto it = ms.matched_refs.find(needle);
    return it == ms.matched_refs.end() ? nullptr : &it->second;
  };
  auto control_ref_at = [&](uint32_t src) -> const Reference* {
    for (const auto& r : refs_patch)
      if (r.kind == Reference::Kind::Control && r.src == src) return &r;
    return nullptr;
  };

  std::vector<Unit> units;
  std::map<uint32_t, size_t> unit_of;  // old addr -> unit index
  std::set<uint32_t> queued_pending;

  auto relocate_slot = [&](uint32_t slot, const BinaryImage& src_img) {
    auto it = plan.data_slots.find(slot);
    if (it != plan.data_slots.end()) return it->second;
    uint32_t fresh = region.alloc_data(4, 4);
    vuln.allow_edits(fresh, 4);
    auto bytes = src_img.read(slot, 4);
    vuln.write(fresh, std::span<const uint8_t>(bytes.data(), 4));
    plan.data_slots[slot] = fresh;
    return fresh;
  };

  auto add_instr = [&](const Instr& ins, bool from_patch) {
    Unit u;
    u.old_addr = ins.addr;
    InstrSpec spec = ins.spec;
    uint8_t forced = 0;

    if (from_patch && has_target(spec)) {
      uint32_t t = 0;
      for (const auto& o : spec.operands)
        if (o.kind == Operand::Kind::PcRelTarget) t = o.value;
      if (patch_cfg.in_function(t)) {
        if (in_emitted(t)) {
          u.in_region_dst = t;
        } else {
          set_target(spec, vuln_twin(t));
        }
      } else {
        const Reference* pr = control_ref_at(ins.addr);
        const Reference* vr = pr ? matched_ref(*pr) : nullptr;
        if (vr) {
          set_target(spec, vr->dst);
        } else {
          u.pending_entry = t;
          if (queued_pending.insert(t).second)
            plan.notes.push_back("queued patch-only function at " + hex(t));
          forced = 4;  // keep width stable so the call can be re-pointed later
        }
      }
    }
    if (from_patch && has_literal(spec)) {
      for (auto& o : spec.operands)
        if (o.kind == Operand::Kind::PcRelLoad) o.value = relocate_slot(o.value, fixed);
    }

    u.specs.push_back(std::move(spec));
    u.min_w.push_back(forced);
    u.cur_w.push_back(forced ? forced : 2);
    unit_of[u.old_addr] = units.size();
    units.push_back(std::move(u));
  };

  for (const auto* b : emit_blocks)
    for (const auto& i : b->instrs) add_instr(i, true);
  for (const auto& i : absorbed) add_instr(i, false);

  std::optional<size_t> return_unit;
  if (return_target) {
    Unit u;
    u.old_addr = 0;
    InstrSpec b;
    b.mnemonic = Mnemonic::B;
    b.operands = {Operand::target(*return_target)};
    u.specs.push_back(b);
    u.min_w.push_back(0);
    u.cur_w.push_back(2);
    return_unit = units.size();
    units.push_back(std::move(u));
  }

  uint32_t entry = region.code_base() + (region.code_base() & 1);

  {  // prime placements so first-round branch distances are plausible
    uint32_t cursor = entry;
    for (auto& u : units) {
      u.placed = cursor;
      for (uint8_t w : u.cur_w) cursor += w;
    }
  }

  // Width/placement fixpoint: encode every instruction at its tentative
  // address, widening (sticky) whatever fails to reach, until stable.
  bool changed = true;
  int rounds = 0;
  while (changed) {
    if (++rounds > 4 + int(2 * units.size()))
      fail(Errc::OutOfRange, "placement fixpoint did not terminate");
    changed = false;
    uint32_t cursor = entry;
    for (auto& u : units) {
      if (u.placed != cursor) {
        u.placed = cursor;
        changed = true;
      }
      for (size_t i = 0; i < u.specs.size(); ++i) {
        InstrSpec spec = u.specs[i];
        if (u.in_region_dst) {
          auto it = unit_of.find(*u.in_region_dst);
          if (it == unit_of.end()) fail(Errc::OutOfRange, "lost in-region branch target");
          set_target(spec, units[it->second].placed);
        } else if (u.pending_entry) {
          set_target(spec, entry);  // placeholder within reach; re-pointed later
        }
        uint8_t w;
        try {
          w = isa::encode(spec, cursor, mode, u.min_w[i]).width;
        } catch (const Error& e) {
          if (e.code() != Errc::OutOfRange && e.code() != Errc::NotEncodable) throw;
          if (u.min_w[i] < 4 && (has_target(spec) || has_literal(spec))) {
            plan.shift_ledger.push_back({cursor, uint32_t(4 - u.cur_w[i]), u.old_addr});
            u.min_w[i] = 4;
            w = 4;
            changed = true;
          } else if (has_literal(spec)) {
            // Literal out of even the widest load's reach: materialize the
            // slot address instead.
            uint32_t slot = 0;
            uint8_t rd = uint8_t(spec.operands.at(0).value);
            for (const auto& o : spec.operands)
              if (o.kind == Operand::Kind::PcRelLoad) slot = o.value;
            InstrSpec movw{Mnemonic::Movw, isa::Cond::Al, false,
                           {Operand::reg(rd), Operand::imm(slot & 0xffffu)}};
            InstrSpec movt{Mnemonic::Movt, isa::Cond::Al, false,
                           {Operand::reg(rd), Operand::imm(slot >> 16)}};
            InstrSpec ldr{spec.mnemonic, isa::Cond::Al, false,
                          {Operand::reg(rd), Operand::reg(rd), Operand::imm(0)}};
            u.specs = {movw, movt, ldr};
            u.min_w = {4, 4, 0};
            u.cur_w = {4, 4, 2};
            plan.notes.push_back("literal load at " + hex(u.old_addr) +
                                 " rewritten as address materialization");
            changed = true;
            break;
          } else {
            throw;
          }
        }
        if (w > u.min_w[i] && u.min_w[i] != 0) {
          plan.shift_ledger.push_back({cursor, uint32_t(w - u.min_w[i]), u.old_addr});
          changed = true;
        }
        if (w > u.min_w[i]) u.min_w[i] = w;
        if (u.cur_w[i] != w) {
          u.cur_w[i] = w;
          changed = true;
        }
        cursor += w;
      }
    }
  }

  uint32_t total = 0;
  for (const auto& u : units)
    for (uint8_t w : u.cur_w) total += w;
  uint32_t base = region.alloc_code(total, 2);
  if (base != entry) fail(Errc::RegionOverflow, "region cursor moved during planning");

  // Final emission.
  vuln.allow_edits(entry, total);
  for (auto& u : units) {
    uint32_t cursor = u.placed;
    for (size_t i = 0; i < u.specs.size(); ++i) {
      InstrSpec spec = u.specs[i];
      if (u.in_region_dst) set_target(spec, units[unit_of[*u.in_region_dst]].placed);
      if (u.pending_entry) set_target(spec, entry);
      Instr out = isa::encode(spec, cursor, mode, u.min_w[i]);
      vuln.write(cursor, std::span<const uint8_t>(out.raw.data(), out.width));
      cursor += out.width;
    }
    if (u.old_addr != 0) plan.placements[u.old_addr] = u.placed;
    if (u.pending_entry) plan.pending_functions.push_back({*u.pending_entry, u.placed});
  }
  if (return_unit)
    plan.return_branches.push_back({units[*return_unit].placed, *return_target});
  plan.entry = entry;
  plan.bytes_emitted = total;

  // Data references: solve each chain against its required location.
  std::map<uint32_t, uint32_t> copied;  // fixed data vaddr -> new vaddr
  for (const auto& pr : refs_patch) {
    if (pr.kind != Reference::Kind::Data) continue;
    if (!in_emitted(pr.src)) continue;
    uint32_t required;
    if (const Reference* vr = matched_ref(pr)) {
      required = uint32_t(vr->memloc.key);
    } else {
      uint32_t faddr = uint32_t(pr.memloc.key);
      auto it = copied.find(faddr);
      if (it == copied.end()) {
        auto bytes = load_data_from(fixed, faddr);
        uint32_t at = region.alloc_data(uint32_t(bytes.size()), 4);
        vuln.allow_edits(at, uint32_t(bytes.size()));
        vuln.write(at, bytes);
        it = copied.emplace(faddr, at).first;
        plan.data_slots[faddr] = at;
        plan.notes.push_back("copied " + std::to_string(bytes.size()) + " data bytes from " +
                             hex(faddr) + " to " + hex(at));
      }
      required = it->second;
    }

    // A movw/movt source can be rewritten in place, no solving needed.
    const Instr* src_ins = patch_cfg.instr_at(pr.src);
    if (src_ins && (src_ins->mnemonic() == Mnemonic::Movw ||
                    src_ins->mnemonic() == Mnemonic::Movt)) {
      for (auto& u : units) {
        const Instr* at = patch_cfg.instr_at(u.old_addr);
        if (!at) continue;
        bool pair = at->mnemonic() == Mnemonic::Movw || at->mnemonic() == Mnemonic::Movt;
        if (!pair || u.specs.size() != 1) continue;
        auto& sp = u.specs[0];
        if (sp.operands.at(0).value != src_ins->operands().at(0).value) continue;
        uint32_t orig = at->operands().at(1).value;
        uint32_t want = at->mnemonic() == Mnemonic::Movw ? (required & 0xffffu)
                                                         : (required >> 16);
        if (orig == sp.operands.at(1).value && u.old_addr <= pr.src) {
          sp.operands[1].value = want;
          Instr out = isa::encode(sp, u.placed, mode, u.min_w[0]);
          vuln.write(u.placed, std::span<const uint8_t>(out.raw.data(), out.width));
        }
      }
      continue;
    }

    slice::Slice sl = slice::backward_slice(fixed, patch_cfg, patch_dfg, pr, plan.placements);
    slice::EquationSystem sys = slice::build_equations(sl, required);
    slice::SolveResult res = slice::solve(sys);
    for (const auto& [loc, value] : res.assignments) {
      uint32_t orig_slot = uint32_t(loc.key);
      auto it = plan.data_slots.find(orig_slot);
      if (it == plan.data_slots.end())
        fail(Errc::SliceEscapes, "solved slot " + hex(orig_slot) + " was never relocated");
      uint8_t b[4] = {uint8_t(value), uint8_t(value >> 8), uint8_t(value >> 16),
                      uint8_t(value >> 24)};
      vuln.write(it->second, std::span<const uint8_t>(b, 4));
    }
  }

  // Redirect over the vulnerable bytes, dead space trap-filled.
  if (!opt.whole_function) {
    InstrSpec b;
    b.mnemonic = Mnemonic::B;
    b.operands = {Operand::target(entry)};
    Instr red = isa::encode(b, vlo, mode, 4);
    vuln.allow_edits(vlo, vhi - vlo);
    vuln.write(vlo, std::span<const uint8_t>(red.raw.data(), red.width));
    for (uint32_t a = vlo + red.width; a + 1 < vhi; a += 2) {
      uint8_t trap[2] = {uint8_t(isa::kTrapHalfword), uint8_t(isa::kTrapHalfword >> 8)};
      vuln.write(a, std::span<const uint8_t>(trap, 2));
    }
    plan.redirect = {vlo, entry};
    plan.replaced_lo = vlo;
    plan.replaced_hi = vhi;
  }

  // Self-check: every emitted pc-relative instruction decodes back to its
  // intended absolute target.
  for (const auto& u : units) {
    uint32_t cursor = u.placed;
    for (size_t i = 0; i < u.specs.size(); ++i) {
      Instr back = isa::decode(vuln.view(cursor, 4), cursor, mode);
      for (const auto& o : back.operands())
        if (o.kind == Operand::Kind::PcRelTarget && u.in_region_dst)
          if (o.value != units[unit_of[*u.in_region_dst]].placed)
            fail(Errc::OutOfRange, "emitted branch at " + hex(cursor) + " drifted");
      cursor += back.width;
    }
  }
  return plan;
}

}  // namespace mend::reassemble
