#include "mend/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>

#include <json.hpp>

#include "mend/fixture.hpp"

namespace mend::corpus {

using fixture::Asm;
using fixture::ElfBuilder;
using interp::TestVector;
using isa::Cond;
using isa::InstrSpec;
using isa::Mnemonic;
using isa::Operand;
using json = nlohmann::json;

namespace {

constexpr uint32_t kBase = 0x10000;
constexpr uint32_t kScratch = 0x70000;  // overlay-only addresses for pointers

// Spec shorthands.
InstrSpec push(uint32_t mask) { return {Mnemonic::Push, Cond::Al, false, {Operand::reg_list(mask)}}; }
InstrSpec pop(uint32_t mask) { return {Mnemonic::Pop, Cond::Al, false, {Operand::reg_list(mask)}}; }
InstrSpec movs_imm(uint8_t rd, uint32_t i) {
  return {Mnemonic::Mov, Cond::Al, true, {Operand::reg(rd), Operand::imm(i)}};
}
InstrSpec mov_reg(uint8_t rd, uint8_t rm) {
  return {Mnemonic::Mov, Cond::Al, false, {Operand::reg(rd), Operand::reg(rm)}};
}
InstrSpec cmp_imm(uint8_t rn, uint32_t i) {
  return {Mnemonic::Cmp, Cond::Al, false, {Operand::reg(rn), Operand::imm(i)}};
}
InstrSpec adds2(uint8_t rdn, uint32_t i) {
  return {Mnemonic::Add, Cond::Al, true, {Operand::reg(rdn), Operand::imm(i)}};
}
InstrSpec adds3(uint8_t rd, uint8_t rn, uint8_t rm) {
  return {Mnemonic::Add, Cond::Al, true, {Operand::reg(rd), Operand::reg(rn), Operand::reg(rm)}};
}
InstrSpec add_pc(uint8_t rdn) {
  return {Mnemonic::Add, Cond::Al, false, {Operand::reg(rdn), Operand::reg(isa::PC)}};
}
InstrSpec lsls_imm(uint8_t rd, uint8_t rm, uint8_t sh) {
  return {Mnemonic::Lsl, Cond::Al, true, {Operand::reg(rd), Operand::reg(rm), Operand::imm(sh)}};
}
InstrSpec ldr_ri(uint8_t rt, uint8_t rn, uint32_t i) {
  return {Mnemonic::Ldr, Cond::Al, false, {Operand::reg(rt), Operand::reg(rn), Operand::imm(i)}};
}
InstrSpec str_ri(uint8_t rt, uint8_t rn, uint32_t i) {
  return {Mnemonic::Str, Cond::Al, false, {Operand::reg(rt), Operand::reg(rn), Operand::imm(i)}};
}
InstrSpec bx_lr() { return {Mnemonic::Bx, Cond::Al, false, {Operand::reg(isa::LR)}}; }

using AddrMap = std::map<std::string, uint32_t>;

struct FnDef {
  std::string name;
  std::function<Asm(const AddrMap&)> make;
  std::function<void(Asm&, const AddrMap&)> fixup;  // optional literal patching
};

struct ImageSpec {
  std::vector<FnDef> funcs;
  std::vector<std::pair<std::string, std::string>> rodata;       // key -> C string
  std::vector<std::pair<std::string, std::vector<uint32_t>>> data;  // symbol -> words
  std::vector<std::string> externals;
};

struct BuiltImage {
  std::vector<uint8_t> elf;
  std::vector<GroundTruthFn> truth;
  AddrMap at;
};

GroundTruthFn derive_truth(const std::string& name, uint32_t entry,
                           const std::vector<Asm::Fact>& facts) {
  GroundTruthFn g;
  g.name = name;
  g.entry = entry;
  if (facts.empty()) return g;
  uint32_t lo = facts.front().addr;
  uint32_t hi = facts.back().addr + facts.back().width;

  std::set<uint32_t> leaders{entry, facts.front().addr};
  for (size_t i = 0; i < facts.size(); ++i) {
    const auto& f = facts[i];
    if (f.is_branch && f.target >= lo && f.target < hi) leaders.insert(f.target);
    if ((f.conditional || f.is_terminator) && i + 1 < facts.size())
      leaders.insert(facts[i + 1].addr);
  }

  std::vector<std::pair<size_t, size_t>> spans;  // first..last fact index
  size_t first = 0;
  for (size_t i = 0; i < facts.size(); ++i) {
    if (i + 1 == facts.size() || leaders.count(facts[i + 1].addr)) {
      spans.push_back({first, i});
      first = i + 1;
    }
  }

  for (const auto& [a, b] : spans) {
    uint32_t start = facts[a].addr;
    g.block_starts.push_back(start);
    const auto& f = facts[b];
    uint32_t next = f.addr + f.width;
    if (f.is_branch) {
      g.edges.push_back({start, f.target, 0});
      if (f.conditional && next < hi) g.edges.push_back({start, next, 2});
    } else if (!f.is_terminator && next < hi) {
      g.edges.push_back({start, next, 2});
    }
    for (size_t i = a; i <= b; ++i)
      if (facts[i].is_call) g.edges.push_back({start, facts[i].target, 1});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

BuiltImage build_image(const ImageSpec& spec, bool strip) {
  AddrMap at;
  for (const auto& f : spec.funcs) at[f.name] = 0;
  for (const auto& [k, s] : spec.rodata) at[k] = 0;
  for (const auto& [k, w] : spec.data) at[k] = 0;
  for (size_t i = 0; i < spec.externals.size(); ++i)
    at[spec.externals[i]] = kBase + 20 + 12 * uint32_t(i);

  std::vector<std::vector<uint8_t>> fn_bytes(spec.funcs.size());
  std::vector<Asm> fn_asm;

  for (int round = 0; round < 6; ++round) {
    fn_asm.clear();
    AddrMap next = at;
    uint32_t cursor = kBase;
    if (!spec.externals.empty()) cursor += 20 + 12 * uint32_t(spec.externals.size());
    for (size_t i = 0; i < spec.funcs.size(); ++i) {
      cursor = (cursor + 3) & ~3u;
      next[spec.funcs[i].name] = cursor;
      Asm a = spec.funcs[i].make(at);
      fn_bytes[i] = a.assemble(cursor);
      if (spec.funcs[i].fixup) {
        spec.funcs[i].fixup(a, at);
        fn_bytes[i] = a.assemble(cursor);
      }
      fn_asm.push_back(std::move(a));
      cursor += uint32_t(fn_bytes[i].size());
    }
    cursor = (cursor + 3) & ~3u;
    for (const auto& [k, s] : spec.rodata) {
      next[k] = cursor;
      cursor += uint32_t(s.size()) + 2;
      cursor = (cursor + 3) & ~3u;
    }
    for (const auto& [k, ws] : spec.data) {
      next[k] = cursor;
      cursor += 4 * uint32_t(ws.size());
    }
    if (next == at) break;
    at = next;
  }

  ElfBuilder eb(kBase);
  if (!spec.externals.empty()) eb.add_externals(spec.externals);
  eb.begin_section(".text");
  for (size_t i = 0; i < spec.funcs.size(); ++i) {
    eb.align(4);
    uint32_t here = eb.here();
    if (here != at.at(spec.funcs[i].name))
      fail(Errc::LayoutConflict, "fixture layout drifted for " + spec.funcs[i].name);
    eb.thumb_at(here);
    eb.func_symbol(spec.funcs[i].name, here);
    eb.bytes(fn_bytes[i]);
  }
  eb.align(4);
  eb.begin_section(".rodata");
  for (const auto& [k, s] : spec.rodata) {
    if (eb.here() != at.at(k)) fail(Errc::LayoutConflict, "rodata layout drifted");
    eb.cstr(s);
    eb.align(4);
  }
  eb.begin_section(".data");
  for (const auto& [k, ws] : spec.data) {
    if (eb.here() != at.at(k)) fail(Errc::LayoutConflict, "data layout drifted");
    eb.obj_symbol(k, eb.here());
    for (uint32_t w : ws) eb.word(w);
  }

  BuiltImage out;
  out.elf = eb.build(strip);
  out.at = at;
  for (size_t i = 0; i < spec.funcs.size(); ++i)
    out.truth.push_back(
        derive_truth(spec.funcs[i].name, at.at(spec.funcs[i].name), fn_asm[i].facts()));
  return out;
}

struct Rng {
  std::mt19937 g;
  uint32_t operator()(uint32_t lo, uint32_t hi) {  // inclusive
    return lo + uint32_t(g() % (hi - lo + 1));
  }
};

// Harmless straight-line padding so the edited part stays a small fraction of
// the function. Touches only r3/r4 scratch, rewritten below by real code.
void emit_filler(Asm& a, uint32_t n) {
  for (uint32_t i = 0; i < n; ++i) {
    if (i & 1)
      a.ins(adds2(4, 1 + (i % 7)));
    else
      a.ins(movs_imm(3, (i * 37) & 0xff));
  }
}

CorpusCase make_case(uint32_t index, uint32_t tmpl, Rng& rng) {
  CorpusCase c;
  c.affected = {"process"};
  ImageSpec vuln, fixed;
  vuln.externals = fixed.externals = {"ext_log"};

  auto finish = [&](bool strip_vuln) {
    BuiltImage bv = build_image(vuln, strip_vuln);
    BuiltImage bf = build_image(fixed, false);
    c.vuln_elf = bv.elf;
    c.fixed_elf = bf.elf;
    c.truth_vuln = bv.truth;
    c.truth_fixed = bf.truth;
    c.stripped = strip_vuln;
    for (auto& v : c.vectors) {
      v.entry = bv.at.at("process");
      v.entry_alt = bf.at.at("process");
    }
    if (c.pov) {
      c.pov->entry = bv.at.at("process");
      c.pov->entry_alt = bf.at.at("process");
    }
  };

  switch (tmpl) {
    case 0: {  // missing bounds check on a table index
      c.tmpl = "missing-bounds-check";
      uint32_t n = rng(4, 12);
      uint32_t val = rng(1, 200);
      uint32_t fill = rng(150, 190);
      auto body = [&, n, fill](bool checked) {
        return [=](const AddrMap& at) {
          Asm a;
          int rej = a.label(), table = a.lit(at.at("g_table"));
          a.ins(push(1u << 4 | 1u << 14));
          emit_filler(a, fill);
          a.ins(cmp_imm(1, 0xff));
          a.b(Cond::Hi, rej);
          if (checked) {
            a.ins(cmp_imm(0, n));
            a.b(Cond::Cs, rej);
          }
          a.ldr_lit(2, table);
          a.ins(lsls_imm(3, 0, 2));
          a.ins(adds3(2, 2, 3));
          a.ins(str_ri(1, 2, 0));
          a.ins(movs_imm(0, 0));
          a.ins(pop(1u << 4 | 1u << 15));
          a.bind(rej);
          a.ins(movs_imm(0, 1));
          emit_filler(a, 24);
          a.ins(pop(1u << 4 | 1u << 15));
          return a;
        };
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), nullptr});
      vuln.data.push_back({"g_table", std::vector<uint32_t>(n, 0)});
      fixed.data.push_back({"g_table", std::vector<uint32_t>(n, 0)});

      TestVector v1{"store-first", 0, 0, 10000, {{0, 0}, {1, val}}, {}, {0}, {}, {"g_table"}};
      TestVector v2{"store-last", 0, 0, 10000, {{0, n - 1}, {1, val + 1}}, {}, {0}, {}, {"g_table"}};
      c.vectors = {v1, v2};
      c.pov = TestVector{"oob-store", 0, 0, 10000, {{0, 0x2000000 + rng(0, 4096)}, {1, 7}},
                         {}, {0}, {}, {"g_table"}};
      finish(false);
      break;
    }
    case 1: {  // null pointer gains a fallback assignment
      c.tmpl = "added-fallback";
      uint32_t dflt = rng(1, 99);
      uint32_t fill = rng(150, 190);
      auto body = [&, dflt, fill](bool with_fallback) {
        return [=](const AddrMap& at) {
          Asm a;
          int fb = a.label(), st = a.label(), cfg = a.lit(at.at("g_cfg"));
          emit_filler(a, fill);
          a.ldr_lit(2, cfg);
          a.ins(cmp_imm(1, 0xff));
          a.b(Cond::Hi, st);
          if (with_fallback) {
            a.ins(cmp_imm(0, 0));
            a.b(Cond::Eq, fb);
          }
          a.ins(ldr_ri(1, 0, 0));
          a.ins(adds2(1, 0));
          if (with_fallback) {
            a.b(Cond::Al, st);
            a.bind(fb);
            a.ins(movs_imm(1, dflt));
          }
          a.bind(st);
          a.ins(str_ri(1, 2, 0));
          a.ins(movs_imm(0, 0));
          emit_filler(a, 24);
          a.ins(bx_lr());
          return a;
        };
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), nullptr});
      vuln.data.push_back({"g_cfg", {0}});
      fixed.data.push_back({"g_cfg", {0}});

      uint32_t word = rng(0x100, 0xffff);
      TestVector v1{"valid-ptr", 0, 0, 10000, {{0, kScratch}}, {}, {0}, {}, {"g_cfg"}};
      for (int i = 0; i < 4; ++i) v1.memory[kScratch + i] = uint8_t(word >> (8 * i));
      c.vectors = {v1};
      c.pov = TestVector{"null-ptr", 0, 0, 10000, {{0, 0}}, {}, {0}, {}, {"g_cfg"}};
      finish(false);
      break;
    }
    case 2: {  // patch introduces a diagnostic string + logging call
      c.tmpl = "new-string-diagnostic";
      std::string s = "len_zero_";
      for (int i = 0; i < 6; ++i) s.push_back(char('a' + rng(0, 25)));
      uint32_t fill = rng(210, 240);
      auto body = [&, fill](bool with_diag) {
        return [=](const AddrMap& at) {
          Asm a;
          int ok = a.label();
          int delta = with_diag ? a.lit(0) : -1;
          a.ins(push(1u << 4 | 1u << 14));
          a.ins(mov_reg(4, 0));
          emit_filler(a, fill);
          a.ins(cmp_imm(0, 0));
          a.b(Cond::Ne, ok);
          if (with_diag) {
            a.ldr_lit(1, delta);
            a.ins(mov_reg(0, 4));
            a.ins(add_pc(1));
            a.bl(at.at("ext_log"));
          }
          a.ins(movs_imm(0, 2));
          a.ins(pop(1u << 4 | 1u << 15));
          a.bind(ok);
          a.ins(movs_imm(0, 0));
          emit_filler(a, 24);
          a.ins(pop(1u << 4 | 1u << 15));
          return a;
        };
      };
      auto fixup = [fill](Asm& a, const AddrMap& at) {
        // slot holds (string - pc-at-add); the add r1,pc follows the filler,
        // the compare, the branch, the literal load and the argument move
        uint32_t add_addr = a.item_addr(2 + fill + 4);
        a.set_lit(0, at.at("s_diag") - (add_addr + 4));
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), fixup});
      fixed.rodata.push_back({"s_diag", s});

      TestVector v1{"nonzero-len", 0, 0, 10000, {{0, rng(1, 60)}}, {}, {0}, {}, {}};
      c.vectors = {v1};
      c.pov = TestVector{"zero-len", 0, 0, 10000, {{0, 0}}, {}, {0}, {}, {}};
      finish(false);
      break;
    }
    case 3: {  // patched branch distance crosses the 16-bit limit
      c.tmpl = "widening-stressor";
      uint32_t k = rng(18, 24);
      uint32_t m = 125 - k;  // beq spans 2*(k+m)+2 bytes, just inside 16-bit reach
      uint32_t c0 = rng(5, 30);
      auto body = [&, k, m, c0](bool fixed_side) {
        return [=](const AddrMap&) {
          Asm a;
          int far = a.label();
          std::vector<int> lits;
          for (uint32_t i = 0; i < k; ++i) lits.push_back(a.lit(0x1000 + i * 3));
          a.ins(push(1u << 4 | 1u << 14));
          a.ins(cmp_imm(0, fixed_side ? c0 + 1 : c0));
          a.b(Cond::Eq, far);
          for (uint32_t i = 0; i < k; ++i) a.ldr_lit(3, lits[i]);
          for (uint32_t i = 0; i < m; ++i) a.ins(movs_imm(3, i & 0xff));
          a.bind(far);
          a.ins(movs_imm(0, fixed_side ? 2 : 1));
          a.ins(pop(1u << 4 | 1u << 15));
          return a;
        };
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), nullptr});

      TestVector v1{"taken", 0, 0, 10000, {{0, c0 + 1}}, {}, {0}, {}, {}};
      TestVector v2{"not-taken", 0, 0, 10000, {{0, c0 + 3}}, {}, {0}, {}, {}};
      c.vectors = {v1, v2};
      c.pov = TestVector{"boundary", 0, 0, 10000, {{0, c0 + 1}}, {}, {0}, {}, {}};
      finish(false);
      break;
    }
    case 4: {  // patch adds a helper function that only exists patch-side
      c.tmpl = "patch-only-helper";
      uint32_t inc = rng(2, 8);
      uint32_t fill = rng(150, 190);
      auto body = [fill](bool fixed_side) {
        return [=](const AddrMap& at) {
          Asm a;
          int call = a.label(), tail = a.label();
          a.ins(push(1u << 4 | 1u << 14));
          emit_filler(a, fill);
          a.b(Cond::Al, call);
          a.bind(call);
          if (fixed_side) {
            a.bl(at.at("helper"));
          } else {
            a.ins(adds2(0, 1));
            a.ins(movs_imm(3, 7));
          }
          a.b(Cond::Al, tail);
          a.bind(tail);
          a.ins(movs_imm(1, 0));
          emit_filler(a, 20);
          a.ins(pop(1u << 4 | 1u << 15));
          return a;
        };
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), nullptr});
      fixed.funcs.push_back({"helper",
                             [inc](const AddrMap&) {
                               Asm a;
                               a.ins(adds2(0, inc));
                               a.ins(bx_lr());
                               return a;
                             },
                             nullptr});
      TestVector v1{"small", 0, 0, 10000, {{0, rng(1, 40)}}, {}, {0, 1}, {}, {}};
      c.vectors = {v1};
      c.pov = TestVector{"wrong-increment", 0, 0, 10000, {{0, 5}}, {}, {0}, {}, {}};
      finish(false);
      break;
    }
    default: {  // counter update gains an increment + wrap threshold
      c.tmpl = "matched-global";
      uint32_t inc = rng(2, 4);
      uint32_t thr = rng(50, 99);
      uint32_t fill = rng(150, 190);
      auto body = [&, inc, thr, fill](bool fixed_side) {
        return [=](const AddrMap& at) {
          Asm a;
          int st = a.label(), ctr = a.lit(at.at("g_counter"));
          emit_filler(a, fill);
          a.ldr_lit(2, ctr);
          a.ins(ldr_ri(1, 2, 0));
          a.ins(cmp_imm(1, 0xf0));
          a.b(Cond::Hi, st);
          a.ins(adds2(1, fixed_side ? inc : 1));
          a.ins(movs_imm(3, 1));
          if (fixed_side) {
            a.ins(cmp_imm(1, thr));
            a.b(Cond::Cc, st);
            a.ins(movs_imm(1, 0));
          }
          a.bind(st);
          a.ins(str_ri(1, 2, 0));
          a.ins(movs_imm(0, 0));
          emit_filler(a, 20);
          a.ins(bx_lr());
          return a;
        };
      };
      vuln.funcs.push_back({"process", body(false), nullptr});
      fixed.funcs.push_back({"process", body(true), nullptr});
      uint32_t init = thr - inc;  // fixed wraps to zero, vulnerable keeps counting
      vuln.data.push_back({"g_counter", {init}});
      fixed.data.push_back({"g_counter", {init}});

      TestVector v1{"tick", 0, 0, 10000, {}, {}, {0}, {}, {"g_counter"}};
      c.vectors = {v1};
      c.pov = TestVector{"overflow-tick", 0, 0, 10000, {}, {}, {0}, {}, {"g_counter"}};
      finish(rng(0, 1) == 0);
      break;
    }
  }
  c.name = "case" + std::to_string(index) + "-" + c.tmpl;
  return c;
}

}  // namespace

std::vector<CorpusCase> generate_corpus(uint32_t seed, uint32_t n) {
  if (n < 1) fail(Errc::Usage, "corpus size must be at least 1");
  std::vector<CorpusCase> out;
  Rng rng{std::mt19937(seed)};
  for (uint32_t i = 0; i < n; ++i) {
    CorpusCase c = make_case(i, i % 6, rng);

    // Self-check before the case is accepted: the fixed binary must run all
    // vectors cleanly, and the bug must be observable on the pov vector.
    auto fixed_img = elf::BinaryImage::from_bytes(c.fixed_elf, c.name + "/fixed");
    auto vuln_img = elf::BinaryImage::from_bytes(c.vuln_elf, c.name + "/vuln");
    for (const auto& v : c.vectors) {
      TestVector fv = v;
      if (v.entry_alt) fv.entry = v.entry_alt;
      interp::Outcome o = interp::run_outcome(fixed_img, fv);
      if (o.faulted)
        fail(Errc::UndefinedInstruction,
             c.name + " self-check: fixed faulted on " + v.name + " (" +
                 errc_name(o.fault) + ")");
    }
    if (c.pov) {
      auto verdicts = interp::differential_check(vuln_img, fixed_img, {*c.pov});
      if (verdicts.at(0).pass)
        fail(Errc::Inconsistent, c.name + " self-check: pov does not diverge");
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

json vector_to_json(const TestVector& v) {
  json j;
  j["name"] = v.name;
  j["entry"] = v.entry;
  j["entry_alt"] = v.entry_alt;
  j["fuel"] = v.fuel;
  j["regs"] = json::object();
  for (const auto& [r, x] : v.regs) j["regs"][std::to_string(r)] = x;
  j["memory"] = json::object();
  for (const auto& [a, b] : v.memory) j["memory"][std::to_string(a)] = b;
  j["out_regs"] = v.out_regs;
  j["out_memory"] = v.out_memory;
  j["out_syms"] = v.out_syms;
  return j;
}

TestVector vector_from_json(const json& j) {
  TestVector v;
  v.name = j.at("name");
  v.entry = j.at("entry");
  v.entry_alt = j.at("entry_alt");
  v.fuel = j.at("fuel");
  for (const auto& [k, x] : j.at("regs").items()) v.regs[uint8_t(std::stoi(k))] = x;
  for (const auto& [k, x] : j.at("memory").items())
    v.memory[uint32_t(std::stoul(k))] = uint8_t(x);
  v.out_regs = j.at("out_regs").get<std::vector<uint8_t>>();
  v.out_memory = j.at("out_memory").get<std::vector<uint32_t>>();
  v.out_syms = j.at("out_syms").get<std::vector<std::string>>();
  return v;
}

json truth_to_json(const std::vector<GroundTruthFn>& fns) {
  json arr = json::array();
  for (const auto& f : fns) {
    json j;
    j["name"] = f.name;
    j["entry"] = f.entry;
    j["blocks"] = f.block_starts;
    j["edges"] = f.edges;
    arr.push_back(j);
  }
  return arr;
}

std::vector<GroundTruthFn> truth_from_json(const json& arr) {
  std::vector<GroundTruthFn> out;
  for (const auto& j : arr) {
    GroundTruthFn f;
    f.name = j.at("name");
    f.entry = j.at("entry");
    f.block_starts = j.at("blocks").get<std::vector<uint32_t>>();
    for (const auto& e : j.at("edges"))
      f.edges.push_back({e.at(0), e.at(1), e.at(2)});
    out.push_back(f);
  }
  return out;
}

}  // namespace

void write_case(const CorpusCase& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto dump = [&](const std::string& file, const std::vector<uint8_t>& bytes) {
    std::ofstream out(dir + "/" + file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) fail(Errc::IoError, "writing " + dir + "/" + file);
  };
  dump("vuln.elf", c.vuln_elf);
  dump("fixed.elf", c.fixed_elf);

  json j;
  j["name"] = c.name;
  j["template"] = c.tmpl;
  j["affected"] = c.affected;
  j["stripped"] = c.stripped;
  j["truth_vuln"] = truth_to_json(c.truth_vuln);
  j["truth_fixed"] = truth_to_json(c.truth_fixed);
  j["vectors"] = json::array();
  for (const auto& v : c.vectors) j["vectors"].push_back(vector_to_json(v));
  if (c.pov) j["pov"] = vector_to_json(*c.pov);
  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) fail(Errc::IoError, "writing " + dir + "/manifest.json");
}

CorpusCase read_case(const std::string& dir) {
  auto slurp = [&](const std::string& file) {
    std::ifstream in(dir + "/" + file, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open " + dir + "/" + file);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  };
  CorpusCase c;
  c.vuln_elf = slurp("vuln.elf");
  c.fixed_elf = slurp("fixed.elf");
  std::ifstream in(dir + "/manifest.json");
  if (!in) fail(Errc::IoError, "cannot open " + dir + "/manifest.json");
  json j = json::parse(in);
  c.name = j.at("name");
  c.tmpl = j.at("template");
  c.affected = j.at("affected").get<std::vector<std::string>>();
  c.stripped = j.at("stripped");
  c.truth_vuln = truth_from_json(j.at("truth_vuln"));
  c.truth_fixed = truth_from_json(j.at("truth_fixed"));
  for (const auto& v : j.at("vectors")) c.vectors.push_back(vector_from_json(v));
  if (j.contains("pov")) c.pov = vector_from_json(j.at("pov"));
  return c;
}

}  // namespace mend::corpus
