#include "mend/match.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <sstream>

namespace mend::match {

using flow::EdgeKind;
using isa::Mnemonic;
using isa::Operand;

std::optional<uint32_t> MatchSet::vuln_for(uint32_t patch_start) const {
  for (const auto& p : pairs)
    if (p.patch_start == patch_start) return p.vuln_start;
  return std::nullopt;
}

std::optional<uint32_t> MatchSet::patch_for(uint32_t vuln_start) const {
  for (const auto& p : pairs)
    if (p.vuln_start == vuln_start) return p.patch_start;
  return std::nullopt;
}

bool MatchSet::perfect_pair(uint32_t patch_start) const {
  for (const auto& p : pairs)
    if (p.patch_start == patch_start) return p.perfect;
  return false;
}

namespace {

constexpr double kSimilarityThreshold = 0.8;

std::vector<double> feature_vector(const Cfg& cfg) {
  std::vector<double> v(26, 0.0);
  size_t calls = 0;
  for (const auto& [s, b] : cfg.blocks)
    for (const auto& i : b.instrs) {
      v.at(size_t(i.mnemonic())) += 1.0;
      if (i.mnemonic() == Mnemonic::Bl || i.mnemonic() == Mnemonic::Blx) ++calls;
    }
  v[24] = double(calls);
  v[25] = double(cfg.blocks.size());
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

isa::Mode mode_of(const BinaryImage& img, uint32_t entry) {
  if (auto m = img.mode_hint(entry)) return *m;
  return isa::Mode::Thumb;
}

// Block fingerprint with address-carrying operands blanked, used to re-pair
// blocks after the control flow diverges and re-converges.
std::string block_key(const BasicBlock& b) {
  std::ostringstream os;
  for (const auto& i : b.instrs) {
    os << int(i.mnemonic()) << '/' << int(i.spec.cond) << '/' << i.spec.set_flags << ':';
    for (const auto& o : i.operands()) {
      if (o.is_address_use) {
        os << "A";
      } else {
        os << int(o.kind) << '.' << o.value << '.' << int(o.shift);
      }
      os << ',';
    }
    os << ';';
  }
  return os.str();
}

std::optional<uint32_t> sole_successor(const Cfg& cfg, uint32_t block, EdgeKind kind) {
  std::optional<uint32_t> out;
  for (const auto& e : cfg.edges) {
    if (e.src != block || e.kind != kind) continue;
    if (out) return std::nullopt;
    out = e.dst;
  }
  return out;
}

}  // namespace

std::vector<FunctionPair> match_functions(const BinaryImage& vuln, const BinaryImage& fixed,
                                          const std::vector<std::string>& names,
                                          std::vector<std::string>* warnings) {
  std::vector<FunctionPair> out;
  for (const auto& name : names) {
    auto fe = fixed.symbol_addr(name);
    if (!fe) fail(Errc::FunctionNotFound, "no symbol '" + name + "' in fixed binary");
    FunctionPair fp;
    fp.name = name;
    fp.patch_entry = *fe;

    if (auto ve = vuln.symbol_addr(name)) {
      fp.vuln_entry = *ve;
      fp.how = FunctionPair::How::Symbol;
      out.push_back(fp);
      continue;
    }

    Cfg fcfg = flow::build_cfg(fixed, *fe, mode_of(fixed, *fe));
    auto want = feature_vector(fcfg);

    std::vector<uint32_t> candidates;
    for (const auto& [n, s] : vuln.symbols())
      if (s.kind == elf::SymInfo::Kind::Func && s.vaddr != 0 && vuln.is_mapped(s.vaddr))
        candidates.push_back(s.vaddr);
    if (candidates.empty())
      for (const auto& [a, m] : vuln.entry_mode_hints())
        if (m == isa::Mode::Thumb || m == isa::Mode::Arm) candidates.push_back(a);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best = 0;
    std::optional<uint32_t> best_addr;
    bool tie = false;
    for (uint32_t cand : candidates) {
      double score;
      try {
        Cfg c = flow::build_cfg(vuln, cand, mode_of(vuln, cand));
        score = cosine(want, feature_vector(c));
      } catch (const Error&) {
        continue;
      }
      if (score > best + 1e-9) {
        best = score;
        best_addr = cand;
        tie = false;
      } else if (best_addr && std::abs(score - best) <= 1e-9) {
        tie = true;  // lowest address already held
      }
    }
    if (!best_addr || best < kSimilarityThreshold)
      fail(Errc::FunctionNotFound,
           "no similarity candidate for '" + name + "' (best " + std::to_string(best) + ")");
    if (tie && warnings)
      warnings->push_back("similarity tie for '" + name + "', picked lowest address " +
                          hex(*best_addr));
    fp.vuln_entry = *best_addr;
    fp.how = FunctionPair::How::Similarity;
    fp.score = best;
    out.push_back(fp);
  }
  return out;
}

bool is_perfect_match(const BasicBlock& a, const BasicBlock& b) {
  if (a.instrs.size() != b.instrs.size()) return false;
  for (size_t i = 0; i < a.instrs.size(); ++i) {
    const auto& x = a.instrs[i];
    const auto& y = b.instrs[i];
    if (x.mnemonic() != y.mnemonic() || x.spec.cond != y.spec.cond ||
        x.spec.set_flags != y.spec.set_flags)
      return false;
    if (x.operands().size() != y.operands().size()) return false;
    bool has_addr_op = false;
    for (size_t k = 0; k < x.operands().size(); ++k) {
      const auto& ox = x.operands()[k];
      const auto& oy = y.operands()[k];
      if (ox.is_address_use || oy.is_address_use) {
        if (ox.kind != oy.kind && !(ox.is_address_use && oy.is_address_use)) return false;
        has_addr_op = true;
        continue;
      }
      if (ox.kind != oy.kind || ox.value != oy.value || ox.shift != oy.shift) return false;
    }
    // Address operands may widen the encoding; only compare widths otherwise.
    if (!has_addr_op && x.width != y.width) return false;
  }
  return true;
}

MatchSet match_blocks(const Cfg& vuln_cfg, const Cfg& patch_cfg) {
  MatchSet ms;
  std::map<uint32_t, uint32_t> v2p, p2v;

  // A block that is nothing but an unconditional jump (a redirect planted by
  // an earlier patch run) is transparent: compare whatever it lands on.
  auto resolve = [&](uint32_t start) {
    for (int hops = 0; hops < 8; ++hops) {
      const BasicBlock* b = vuln_cfg.block_at(start);
      if (!b || b->instrs.size() != 1) break;
      const auto& i = b->instrs[0];
      if (i.mnemonic() != Mnemonic::B || i.spec.cond != isa::Cond::Al) break;
      uint32_t t = 0;
      for (const auto& o : i.operands())
        if (o.kind == Operand::Kind::PcRelTarget) t = o.value;
      if (!vuln_cfg.block_at(t)) break;
      start = t;
    }
    return start;
  };

  auto corresponded = [&](uint32_t v, uint32_t p) {
    return v2p.count(v) || p2v.count(p);
  };
  auto pair_up = [&](uint32_t v, uint32_t p) {
    v = resolve(v);
    if (corresponded(v, p)) return false;
    v2p[v] = p;
    p2v[p] = v;
    return true;
  };
  uint32_t ventry = resolve(vuln_cfg.entry);

  bool grew = true;
  pair_up(ventry, patch_cfg.entry);
  while (grew) {
    grew = false;
    // Propagate correspondence along same-kind control edges.
    std::deque<std::pair<uint32_t, uint32_t>> work(1, {ventry, patch_cfg.entry});
    std::set<std::pair<uint32_t, uint32_t>> seen;
    while (!work.empty()) {
      auto [v, p] = work.front();
      work.pop_front();
      if (!seen.insert({v, p}).second) continue;
      for (EdgeKind k : {EdgeKind::Jump, EdgeKind::Fallthrough}) {
        auto vs = sole_successor(vuln_cfg, v, k);
        auto psd = sole_successor(patch_cfg, p, k);
        if (!vs || !psd) continue;
        if (!vuln_cfg.block_at(*vs) || !patch_cfg.block_at(*psd)) continue;
        uint32_t vr = resolve(*vs);
        if (pair_up(vr, *psd)) grew = true;
        if (v2p.count(vr) && v2p[vr] == *psd) work.push_back({vr, *psd});
      }
    }
    // Re-pair structurally identical leftovers (unique fingerprints on both
    // sides), which recovers the shared tail after a diverging edit.
    std::map<std::string, std::vector<uint32_t>> vkeys, pkeys;
    for (const auto& [s, b] : vuln_cfg.blocks)
      if (!v2p.count(s)) vkeys[block_key(b)].push_back(s);
    for (const auto& [s, b] : patch_cfg.blocks)
      if (!p2v.count(s)) pkeys[block_key(b)].push_back(s);
    for (const auto& [key, vlist] : vkeys) {
      auto it = pkeys.find(key);
      if (it == pkeys.end()) continue;
      if (vlist.size() == 1 && it->second.size() == 1)
        if (pair_up(vlist[0], it->second[0])) grew = true;
    }
  }

  // A trailing unconditional branch standing in for the counterpart's
  // fallthrough is a layout artifact of relocation, not an edit.
  auto branch_target = [](const isa::Instr& i) -> uint32_t {
    for (const auto& o : i.operands())
      if (o.kind == Operand::Kind::PcRelTarget) return o.value;
    return 0;
  };
  auto perfect_modulo_layout = [&](const BasicBlock& vb, const BasicBlock& pb) {
    if (is_perfect_match(vb, pb)) return true;
    if (vb.instrs.size() == pb.instrs.size() + 1) {
      const auto& tail = vb.instrs.back();
      if (tail.mnemonic() == Mnemonic::B && tail.spec.cond == isa::Cond::Al) {
        auto ps = sole_successor(patch_cfg, pb.start, EdgeKind::Fallthrough);
        uint32_t vt = resolve(branch_target(tail));
        if (ps && v2p.count(vt) && v2p[vt] == *ps) {
          BasicBlock trimmed = vb;
          trimmed.instrs.pop_back();
          return is_perfect_match(trimmed, pb);
        }
      }
    }
    if (pb.instrs.size() == vb.instrs.size() + 1) {
      const auto& tail = pb.instrs.back();
      if (tail.mnemonic() == Mnemonic::B && tail.spec.cond == isa::Cond::Al) {
        auto vs = sole_successor(vuln_cfg, vb.start, EdgeKind::Fallthrough);
        uint32_t pt = branch_target(tail);
        if (vs && p2v.count(pt) && p2v[pt] == resolve(*vs)) {
          BasicBlock trimmed = pb;
          trimmed.instrs.pop_back();
          return is_perfect_match(vb, trimmed);
        }
      }
    }
    return false;
  };

  for (const auto& [p, blk] : patch_cfg.blocks) {
    BlockMatch bm;
    bm.patch_start = p;
    auto it = p2v.find(p);
    if (it != p2v.end()) {
      bm.vuln_start = it->second;
      bm.perfect = perfect_modulo_layout(*vuln_cfg.block_at(it->second), blk);
    }
    ms.pairs.push_back(bm);
  }
  for (const auto& [v, blk] : vuln_cfg.blocks)
    if (!v2p.count(v)) ms.pairs.push_back({v, std::nullopt, false});

  // Patch region: first through last non-perfect patch block, inclusive of
  // perfectly matched blocks in between.
  std::optional<uint32_t> first, last;
  for (const auto& [p, blk] : patch_cfg.blocks) {
    bool perfect = ms.perfect_pair(p);
    if (!perfect) {
      if (!first) first = p;
      last = p;
    }
  }
  if (first) {
    const BasicBlock* lb = patch_cfg.block_at(*last);
    ms.patch_region_lo = *first;
    ms.patch_region_hi = lb->end();
    for (const auto& [p, blk] : patch_cfg.blocks)
      if (p >= ms.patch_region_lo && p < ms.patch_region_hi) ms.patch_region.push_back(p);
  }

  // Vuln region: span of vuln blocks without a perfect partner; empty (an
  // insertion point) when every vuln block matched perfectly.
  std::optional<uint32_t> vfirst, vlast_end;
  for (const auto& [v, blk] : vuln_cfg.blocks) {
    auto it = v2p.find(v);
    bool perfect = it != v2p.end() && ms.perfect_pair(it->second);
    if (!perfect) {
      if (!vfirst) vfirst = v;
      vlast_end = blk.end();
    }
  }
  if (vfirst) {
    ms.vuln_region_lo = *vfirst;
    ms.vuln_region_hi = *vlast_end;
  } else if (first) {
    uint32_t anchor = vuln_cfg.hi;
    auto after = patch_cfg.blocks.upper_bound(*last);
    if (after != patch_cfg.blocks.end()) {
      auto it = p2v.find(after->first);
      if (it != p2v.end()) anchor = it->second;
    }
    ms.vuln_region_lo = ms.vuln_region_hi = anchor;
  }
  return ms;
}

namespace {

std::optional<std::string> name_at(const BinaryImage& img, uint32_t addr) {
  if (auto n = img.symbol_at(addr)) return n;
  auto it = img.plt_stubs().find(addr);
  if (it != img.plt_stubs().end()) return it->second;
  return std::nullopt;
}

std::optional<uint32_t> addr_of(const BinaryImage& img, const std::string& name) {
  if (auto a = img.symbol_addr(name)) return a;
  for (const auto& [a, n] : img.plt_stubs())
    if (n == name) return a;
  return std::nullopt;
}

}  // namespace

MatchSet& match_references(MatchSet& ms, const Cfg& vuln_cfg, const Cfg& patch_cfg,
                           const std::vector<Reference>& refs_vuln,
                           const std::vector<Reference>& refs_patch,
                           const BinaryImage& vuln, const BinaryImage& fixed) {
  for (const auto& pr : refs_patch) {
    if (pr.kind == Reference::Kind::Control) {
      if (pr.dest_in_function) continue;  // retargeted via the block pairing
      auto callee = name_at(fixed, pr.dst);
      std::optional<uint32_t> vtarget;
      if (callee) vtarget = addr_of(vuln, *callee);

      // Fall back on src-block agreement when the callee has no name match.
      std::optional<Reference> counterpart;
      const auto* pb = patch_cfg.block_containing(pr.src);
      std::optional<uint32_t> vb = pb ? ms.vuln_for(pb->start) : std::nullopt;
      for (const auto& vr : refs_vuln) {
        if (vr.kind != Reference::Kind::Control || vr.dest_in_function) continue;
        if (vtarget && vr.dst == *vtarget) {
          counterpart = vr;
          break;
        }
        if (!vtarget && vb) {
          const auto* vbb = vuln_cfg.block_containing(vr.src);
          if (vbb && vbb->start == *vb) {
            counterpart = vr;
            vtarget = vr.dst;
            break;
          }
        }
      }
      if (vtarget) {
        Reference vr = counterpart.value_or(Reference{});
        if (!counterpart) {
          vr.kind = Reference::Kind::Control;
          vr.src = pr.src;
          vr.dest_in_function = false;
        }
        vr.dst = *vtarget;
        if (counterpart && counterpart->dst != *vtarget)
          ms.warnings.push_back("control ref arbitration at " + hex(pr.src) +
                                ": dst identity wins over src-block pairing");
        ms.matched_refs[pr] = vr;
      }
      continue;
    }

    // Data reference: memloc identity via symbol name, GOT slot, or an
    // existing vuln reference to the identically named location.
    uint32_t faddr = uint32_t(pr.memloc.key);
    std::optional<uint32_t> vaddr;
    if (auto n = fixed.symbol_at(faddr)) vaddr = vuln.symbol_addr(*n);
    if (!vaddr) {
      auto it = fixed.got_entries().find(faddr);
      if (it != fixed.got_entries().end())
        for (const auto& [ga, gn] : vuln.got_entries())
          if (gn == it->second) {
            vaddr = ga;
            break;
          }
    }
    if (!vaddr) continue;  // unmatched: data is copied in during reassembly

    std::optional<Reference> counterpart;
    for (const auto& vr : refs_vuln)
      if (vr.kind == Reference::Kind::Data && uint32_t(vr.memloc.key) == *vaddr) {
        counterpart = vr;
        break;
      }
    Reference vr = counterpart.value_or(Reference{});
    if (!counterpart) {
      vr.kind = Reference::Kind::Data;
      vr.src = pr.src;
      vr.dst = pr.dst;
      vr.dest_in_function = false;
    }
    vr.memloc = flow::MemLoc::global(*vaddr);
    ms.matched_refs[pr] = vr;
  }
  return ms;
}

}  // namespace mend::match
