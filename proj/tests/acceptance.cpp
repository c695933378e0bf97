// Acceptance gate: one pass/fail line per primary criterion. Run with a
// criterion number (1-8) to execute just that one, or no arguments for all.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "affine_cases.hpp"
#include "codec_space.hpp"
#include "images.hpp"
#include "mend/corpus.hpp"
#include "mend/match.hpp"
#include "mend/pipeline.hpp"
#include "mend/reassemble.hpp"
#include "mend/slice.hpp"

using namespace mend;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Worked example: the relocated literal-plus-pc slot value.
//    Literal load feeding `add r1, pc` placed at 0x130c, target global
//    0x2500; the documented expected slot word is 0x14f0.

Outcome criterion_1() {
  auto t0 = Clock::now();
  slice::EquationSystem sys;
  sys.equations.push_back({1, slice::IrStmt::Op::Load, {slice::IrOperand::slot(0x1014)}});
  // pc read by `add r1, pc` at its placed address 0x130c
  uint32_t pc = isa::pc_value(0x130c, isa::Mode::Thumb);
  sys.equations.push_back(
      {2, slice::IrStmt::Op::IntAdd, {slice::IrOperand::var(1), slice::IrOperand::constant(pc)}});
  sys.target_var = 2;
  sys.required = 0x2500;

  slice::SolveResult r = slice::solve(sys);
  if (r.assignments.size() != 1) return {false, "solver returned no unique assignment"};
  uint32_t got = r.assignments[0].second;
  char buf[160];
  snprintf(buf, sizeof buf,
           "expected slot word 0x14f0, solver yields 0x%x (= 0x2500 - 0x%x) in %.3fs",
           got, pc, seconds_since(t0));
  bool pass = got == 0x14f0 && seconds_since(t0) < 1.0;
  return {pass, buf};
}

// ---------------------------------------------------------------------------
// 2. Widening fixpoint: narrow conditional branch re-emitted wide, downstream
//    displacements shifted by exactly the ledger total, bit-exact decode-back.

Outcome criterion_2() {
  auto t0 = Clock::now();
  auto cases = corpus::generate_corpus(43, 4);
  const corpus::CorpusCase* wc = nullptr;
  for (const auto& c : cases)
    if (c.tmpl == "widening-stressor") wc = &c;
  if (!wc) return {false, "no widening case generated"};

  elf::BinaryImage vuln = elf::BinaryImage::from_bytes(wc->vuln_elf);
  elf::BinaryImage fixed = elf::BinaryImage::from_bytes(wc->fixed_elf);
  match::FunctionPair pr = match::match_functions(vuln, fixed, {"process"}).at(0);
  flow::Cfg cv = flow::build_cfg(vuln, pr.vuln_entry, isa::Mode::Thumb);
  flow::Cfg cp = flow::build_cfg(fixed, pr.patch_entry, isa::Mode::Thumb);
  flow::Dfg dv = flow::build_dfg(vuln, cv);
  flow::Dfg dp = flow::build_dfg(fixed, cp);
  auto rv = flow::extract_references(vuln, cv, dv);
  auto rp = flow::extract_references(fixed, cp, dp);
  match::MatchSet ms = match::match_blocks(cv, cp);
  match::match_references(ms, cv, cp, rv, rp, vuln, fixed);
  elf::PatchRegion region = vuln.alloc_patch_region(4096);
  reassemble::PatchPlan plan =
      reassemble::plan_and_reassemble(ms, vuln, fixed, region, &cv, cp, dp, rp);

  if (plan.shift_ledger.empty()) return {false, "no widening recorded in the shift ledger"};

  // the recorded cause must be a branch that was narrow at the source
  const reassemble::ShiftRecord* rec = nullptr;
  for (const auto& s : plan.shift_ledger) {
    isa::Instr src = isa::decode(fixed.view(s.cause, 4), s.cause, isa::Mode::Thumb);
    if (src.mnemonic() == isa::Mnemonic::B && src.spec.cond != isa::Cond::Al && src.width == 2)
      rec = &s;
  }
  if (!rec) return {false, "no ledger entry names a narrow conditional branch"};

  uint32_t ledger_total = 0;
  for (const auto& s : plan.shift_ledger) ledger_total += s.delta;

  isa::Instr wide = isa::decode(vuln.view(rec->at, 4), rec->at, isa::Mode::Thumb);
  if (wide.width != 4 || wide.mnemonic() != isa::Mnemonic::B || wide.spec.cond == isa::Cond::Al)
    return {false, "widened branch not emitted in the 32-bit form"};
  if (wide.width != 2 + rec->delta) return {false, "ledger delta disagrees with emitted width"};

  // contiguous placement; downstream displacements carry exactly the extra
  // bytes the ledger accounts for at the widening point
  std::vector<std::pair<uint32_t, uint32_t>> ordered(plan.placements.begin(),
                                                     plan.placements.end());
  uint32_t branch_src = rec->cause;
  for (size_t i = 0; i + 1 < ordered.size(); ++i) {
    isa::Instr here = isa::decode(vuln.view(ordered[i].second, 4), ordered[i].second,
                                  isa::Mode::Thumb);
    if (ordered[i + 1].second != ordered[i].second + here.width)
      return {false, "placed instructions are not contiguous at " + hex(ordered[i].second)};
  }
  uint32_t p_branch = plan.placements.at(branch_src);
  for (const auto& [a, p] : ordered) {
    if (a <= branch_src) continue;
    // widths of everything placed strictly between the branch and `a`
    uint32_t between = 0;
    for (const auto& [a2, p2] : ordered) {
      if (a2 <= branch_src || a2 >= a) continue;
      between += isa::decode(vuln.view(p2, 4), p2, isa::Mode::Thumb).width;
    }
    uint32_t naive = p_branch + 2 + between;  // branch kept at its source width
    if (p != naive + rec->delta)
      return {false, "downstream instruction at " + hex(a) +
                         " not shifted by the ledger amount"};
  }

  // bit-exact decode-back of everything placed
  for (const auto& [a, p] : ordered) {
    isa::Instr got = isa::decode(vuln.view(p, 4), p, isa::Mode::Thumb);
    isa::Instr re = isa::encode(got.spec, p, isa::Mode::Thumb, got.width);
    if (re.width != got.width || re.raw != got.raw)
      return {false, "decode-back mismatch at placed " + hex(p)};
  }

  double dt = seconds_since(t0);
  char buf[160];
  snprintf(buf, sizeof buf,
           "branch at %#x re-emitted wide at %#x, ledger total %u, %zu instructions verified "
           "in %.3fs",
           rec->cause, rec->at, ledger_total, ordered.size(), dt);
  return {dt < 1.0, buf};
}

// ---------------------------------------------------------------------------
// 3. Exhaustive decode/encode identity over every encoding template.

Outcome criterion_3() {
  auto t0 = Clock::now();
  codec_space::Stats st = codec_space::run_all();
  double dt = seconds_since(t0);
  char buf[160];
  snprintf(buf, sizeof buf, "%llu encodings checked, %zu failures, %.1fs",
           static_cast<unsigned long long>(st.checked), st.failures.size(), dt);
  std::string detail = buf;
  for (size_t i = 0; i < st.failures.size() && i < 5; ++i) detail += "\n    " + st.failures[i];
  bool pass = st.failures.empty() && st.checked >= 100000 && st.checked <= 10000000 && dt < 60.0;
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 4. Solver soundness on 1,000 random affine slices, validated by an
//    independent forward evaluation.

Outcome criterion_4() {
  auto t0 = Clock::now();
  std::mt19937 rng(0x5eed5);
  for (int i = 0; i < 1000; ++i) {
    affine_cases::Case c = affine_cases::random_case(rng, 6);
    slice::SolveResult r;
    try {
      r = slice::solve(c.sys);
    } catch (const Error& e) {
      return {false, "case " + std::to_string(i) + " failed to solve: " + e.what()};
    }
    if (r.assignments.size() != 1)
      return {false, "case " + std::to_string(i) + ": no unique slot assignment"};
    uint32_t got = affine_cases::evaluate(c.sys, r.assignments[0].second);
    if (got != c.sys.required)
      return {false, "case " + std::to_string(i) + ": evaluation disagrees with the solver"};
  }
  double dt = seconds_since(t0);
  char buf[96];
  snprintf(buf, sizeof buf, "1000 random slices solved and validated in %.2fs", dt);
  return {dt < 10.0, buf};
}

// ---------------------------------------------------------------------------
// Shared staging for the corpus-wide criteria.

struct StagedCase {
  corpus::CorpusCase c;
  std::string vuln_path, fixed_path, out_path;
  pipeline::PatchReport rep;
  bool patched = false;
};

std::vector<StagedCase> run_corpus(uint32_t seed, uint32_t n, const std::string& tag,
                                   std::string* err) {
  std::vector<StagedCase> out;
  auto cases = corpus::generate_corpus(seed, n);
  std::string dir = images::scratch_dir("acceptance-" + tag);
  for (const auto& c : cases) {
    StagedCase sc;
    sc.c = c;
    sc.vuln_path = images::write_file(dir, c.name + ".vuln.elf", c.vuln_elf);
    sc.fixed_path = images::write_file(dir, c.name + ".fixed.elf", c.fixed_elf);
    sc.out_path = dir + "/" + c.name + ".patched.elf";
    pipeline::Options opt;
    opt.vuln_path = sc.vuln_path;
    opt.fixed_path = sc.fixed_path;
    opt.out_path = sc.out_path;
    opt.functions = c.affected;
    try {
      sc.rep = pipeline::run_patch(opt);
    } catch (const Error& e) {
      if (err) *err = c.name + ": " + e.what();
      return out;
    }
    sc.patched = sc.rep.ok;
    out.push_back(std::move(sc));
  }
  return out;
}

// 5. End-to-end success rate with differential verification and typed aborts.

Outcome criterion_5() {
  auto t0 = Clock::now();
  std::string err;
  auto staged = run_corpus(7, 24, "e2e", &err);
  if (staged.size() != 24) return {false, "corpus run aborted: " + err};

  int verified = 0;
  std::string first_fail;
  for (auto& sc : staged) {
    if (!sc.patched) {
      // failures must carry a typed reason
      for (const auto& f : sc.rep.functions)
        if (f.status.rfind("aborted:", 0) == 0 && f.status.size() == 8)
          return {false, sc.c.name + ": abort without a typed reason"};
      continue;
    }
    elf::BinaryImage patched = elf::BinaryImage::load(sc.out_path);
    elf::BinaryImage fixed = elf::BinaryImage::from_bytes(sc.c.fixed_elf);
    elf::BinaryImage vuln = elf::BinaryImage::from_bytes(sc.c.vuln_elf);

    std::vector<interp::TestVector> all = sc.c.vectors;
    all.push_back(*sc.c.pov);
    bool ok = true;
    for (const auto& v : interp::differential_check(patched, fixed, all))
      if (!v.pass) {
        ok = false;
        if (first_fail.empty()) first_fail = sc.c.name + "/" + v.vector_name + ": " + v.detail;
      }
    // the pov must demonstrate real divergence against the vulnerable input
    auto pov = interp::differential_check(vuln, fixed, {*sc.c.pov});
    if (pov.size() != 1 || pov[0].pass) {
      ok = false;
      if (first_fail.empty()) first_fail = sc.c.name + ": pov does not diverge";
    }
    if (ok) ++verified;
  }
  double dt = seconds_since(t0);
  char buf[160];
  snprintf(buf, sizeof buf, "%d/24 cases patched and verified in %.1fs", verified, dt);
  std::string detail = buf;
  if (!first_fail.empty()) detail += "\n    first failure: " + first_fail;
  return {verified >= 22 && dt < 300.0, detail};  // >= 90%
}

// 6. Minimality: byte edits confined to headers, the replaced interval and
//    the appended region; small patches stay under 10% of the function.

Outcome criterion_6() {
  std::string err;
  auto staged = run_corpus(7, 12, "minimality", &err);
  if (staged.size() != 12) return {false, "corpus run aborted: " + err};

  for (auto& sc : staged) {
    if (!sc.patched) continue;
    elf::BinaryImage patched = elf::BinaryImage::load(sc.out_path);
    const std::vector<uint8_t>& before = sc.c.vuln_elf;
    const std::vector<uint8_t>& after = patched.bytes();

    auto allowed = images::header_ranges(before);
    for (const auto& r : images::header_ranges(after)) allowed.push_back(r);
    uint32_t replaced_total = 0;
    for (const auto& f : sc.rep.functions) {
      if (f.replaced_hi <= f.replaced_lo) continue;
      replaced_total += f.replaced_hi - f.replaced_lo;
      allowed.push_back({patched.to_offset(f.replaced_lo), patched.to_offset(f.replaced_hi)});
    }

    uint32_t stray = 0;
    for (const auto& d : pipeline::diff_bytes(before, after)) {
      if (d.kind != "changed") continue;  // appended region bytes are new space
      for (uint32_t off = d.offset; off < d.offset + d.size; ++off) {
        if (off >= before.size() || before[off] == after[off]) continue;
        bool ok = false;
        for (const auto& [lo, hi] : allowed)
          if (off >= lo && off < hi) ok = true;
        if (!ok) ++stray;
      }
    }
    if (stray > replaced_total)
      return {false, sc.c.name + ": " + std::to_string(stray) +
                         " stray changed bytes exceed the replaced interval (" +
                         std::to_string(replaced_total) + ")"};

    if (sc.c.tmpl != "widening-stressor") {
      uint32_t fn_size = 0;
      for (const auto& f : sc.rep.functions)
        if (f.function_hi > f.function_lo) fn_size += f.function_hi - f.function_lo;
      if (fn_size == 0) return {false, sc.c.name + ": no function interval reported"};
      if (sc.rep.region_bytes_used * 10 > fn_size)
        return {false, sc.c.name + ": region bytes used " +
                           std::to_string(sc.rep.region_bytes_used) + " exceed 10% of " +
                           std::to_string(fn_size)};
    }
  }
  return {true, "12 cases: edits confined, small patches within the 10% budget"};
}

// 7. Layout preservation of every original program header.

Outcome criterion_7() {
  std::string err;
  auto staged = run_corpus(19, 6, "layout", &err);
  if (staged.size() != 6) return {false, "corpus run aborted: " + err};

  for (auto& sc : staged) {
    if (!sc.patched) return {false, sc.c.name + " failed to patch"};
    elf::BinaryImage patched = elf::BinaryImage::load(sc.out_path);
    auto orig = images::raw_phdrs(sc.c.vuln_elf);
    auto now = images::raw_phdrs(patched.bytes());
    if (now.size() < orig.size())
      return {false, sc.c.name + ": program headers disappeared"};
    for (size_t i = 0; i < orig.size(); ++i) {
      if (now[i].vaddr != orig[i].vaddr || now[i].offset != orig[i].offset)
        return {false, sc.c.name + ": header " + std::to_string(i) +
                           " moved (vaddr/offset changed)"};
    }
    for (size_t i = 0; i < orig.size(); ++i)
      for (size_t j = i + 1; j < orig.size(); ++j)
        if (now[j].vaddr - now[i].vaddr != orig[j].vaddr - orig[i].vaddr)
          return {false, sc.c.name + ": pairwise vaddr distance changed"};
  }
  return {true, "6 cases: all original phdr vaddr/offset pairs and distances intact"};
}

// 8. Idempotence: diffing the patched output against the fixed binary finds
//    an empty patch region.

Outcome criterion_8() {
  std::string err;
  auto staged = run_corpus(23, 6, "rediff", &err);
  if (staged.size() != 6) return {false, "corpus run aborted: " + err};

  for (auto& sc : staged) {
    if (!sc.patched) return {false, sc.c.name + " failed to patch"};
    elf::BinaryImage patched = elf::BinaryImage::load(sc.out_path);
    elf::BinaryImage fixed = elf::BinaryImage::from_bytes(sc.c.fixed_elf);
    for (const auto& fname : sc.c.affected) {
      match::FunctionPair pr;
      try {
        pr = match::match_functions(patched, fixed, {fname}).at(0);
      } catch (const Error& e) {
        return {false, sc.c.name + "/" + fname + ": " + e.what()};
      }
      flow::Cfg cv = flow::build_cfg(patched, pr.vuln_entry, isa::Mode::Thumb);
      flow::Cfg cp = flow::build_cfg(fixed, pr.patch_entry, isa::Mode::Thumb);
      match::MatchSet ms = match::match_blocks(cv, cp);
      if (!ms.patch_region.empty())
        return {false, sc.c.name + "/" + fname + ": re-diff found a non-empty patch region [" +
                           hex(ms.patch_region_lo) + "," + hex(ms.patch_region_hi) + ")"};
    }
  }
  return {true, "6 cases: re-diff of patched vs fixed reports an empty patch region"};
}

const char* kLabels[8] = {
    "worked-example slot value",
    "widening fixpoint and shift ledger",
    "codec round-trip over the template space",
    "solver soundness on random affine slices",
    "end-to-end corpus success rate",
    "patch minimality",
    "program-header layout preservation",
    "re-diff idempotence",
};

Outcome run_criterion(int n) {
  switch (n) {
    case 1: return criterion_1();
    case 2: return criterion_2();
    case 3: return criterion_3();
    case 4: return criterion_4();
    case 5: return criterion_5();
    case 6: return criterion_6();
    case 7: return criterion_7();
    case 8: return criterion_8();
  }
  return {false, "unknown criterion"};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};

  bool all_pass = true;
  for (int n : which) {
    Outcome o;
    try {
      o = run_criterion(n);
    } catch (const std::exception& e) {
      o = {false, std::string("unhandled error: ") + e.what()};
    }
    printf("criterion %d (%s): %s  %s\n", n, n >= 1 && n <= 8 ? kLabels[n - 1] : "?",
           o.pass ? "PASS" : "FAIL", o.detail.c_str());
    if (!o.pass) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
