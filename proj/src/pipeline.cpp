#include "mend/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mend/match.hpp"
#include "mend/slice.hpp"

namespace mend::pipeline {

using json = nlohmann::json;
using isa::Mode;

std::string fnv64_hex(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[24];
  snprintf(buf, sizeof buf, "fnv64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) fail(Errc::IoError, "writing " + path);
}

struct FunctionArtifacts {
  flow::Cfg vuln_cfg, patch_cfg;
  flow::Dfg vuln_dfg, patch_dfg;
  std::vector<flow::Reference> vuln_refs, patch_refs;
  match::MatchSet ms;
};

FunctionArtifacts analyze_pair(const BinaryImage& vuln, const BinaryImage& fixed,
                               const match::FunctionPair& pr) {
  FunctionArtifacts fa;
  Mode vmode = vuln.mode_hint(pr.vuln_entry).value_or(Mode::Thumb);
  Mode pmode = fixed.mode_hint(pr.patch_entry).value_or(Mode::Thumb);
  fa.vuln_cfg = flow::build_cfg(vuln, pr.vuln_entry, vmode);
  fa.patch_cfg = flow::build_cfg(fixed, pr.patch_entry, pmode);
  fa.vuln_dfg = flow::build_dfg(vuln, fa.vuln_cfg);
  fa.patch_dfg = flow::build_dfg(fixed, fa.patch_cfg);
  fa.vuln_refs = flow::extract_references(vuln, fa.vuln_cfg, fa.vuln_dfg);
  fa.patch_refs = flow::extract_references(fixed, fa.patch_cfg, fa.patch_dfg);
  fa.ms = match::match_blocks(fa.vuln_cfg, fa.patch_cfg);
  match::match_references(fa.ms, fa.vuln_cfg, fa.patch_cfg, fa.vuln_refs, fa.patch_refs, vuln,
                          fixed);
  return fa;
}

void dump_function(const Options& opt, const std::string& name, const FunctionArtifacts& fa,
                   const BinaryImage& fixed, const reassemble::PatchPlan& plan) {
  if (opt.dump_graphs) {
    write_text(opt.dump_dir + "/" + name + ".vuln.graphs.txt",
               flow::dump_graphs(fa.vuln_cfg, fa.vuln_dfg));
    write_text(opt.dump_dir + "/" + name + ".patch.graphs.txt",
               flow::dump_graphs(fa.patch_cfg, fa.patch_dfg));
  }
  if (opt.dump_slices) {
    std::string text;
    for (const auto& [pref, vref] : fa.ms.matched_refs) {
      if (pref.kind != flow::Reference::Kind::Data) continue;
      try {
        slice::Slice s = slice::backward_slice(fixed, fa.patch_cfg, fa.patch_dfg, pref,
                                               plan.placements);
        slice::EquationSystem sys = slice::build_equations(s, vref.dst);
        text += "ref " + hex(pref.src) + " -> " + hex(vref.dst) + "\n";
        text += slice::dump(s);
        text += slice::dump(sys);
        text += "\n";
      } catch (const Error& e) {
        text += "ref " + hex(pref.src) + ": " + e.what() + "\n\n";
      }
    }
    write_text(opt.dump_dir + "/" + name + ".slices.txt", text);
  }
}

}  // namespace

PatchReport run_patch(const Options& opt) {
  PatchReport rep;
  rep.vuln_path = opt.vuln_path;
  rep.fixed_path = opt.fixed_path;
  rep.out_path = opt.out_path;
  rep.opt_hint = opt.opt_hint;

  BinaryImage vuln = BinaryImage::load(opt.vuln_path);
  BinaryImage fixed = BinaryImage::load(opt.fixed_path);
  rep.vuln_hash = fnv64_hex(vuln.bytes());
  rep.fixed_hash = fnv64_hex(fixed.bytes());

  elf::PatchRegion region = vuln.alloc_patch_region(opt.region_size);
  rep.region_vaddr = region.vaddr;
  rep.region_size = region.size;

  rep.ok = true;
  std::map<uint32_t, uint32_t> placed_helpers;  // patch entry -> placed entry

  for (const auto& fname : opt.functions) {
    FunctionReport fr;
    fr.name = fname;

    BinaryImage snapshot = vuln;
    elf::PatchRegion region_snapshot = region;
    auto helpers_snapshot = placed_helpers;

    try {
      match::FunctionPair pr =
          match::match_functions(vuln, fixed, {fname}, &rep.warnings).at(0);
      fr.vuln_entry = pr.vuln_entry;
      fr.patch_entry = pr.patch_entry;
      fr.matched_by = pr.how == match::FunctionPair::How::Symbol ? "symbol" : "similarity";
      fr.match_score = pr.score;
      FunctionArtifacts fa = analyze_pair(vuln, fixed, pr);
      fr.blocks_vuln = uint32_t(fa.vuln_cfg.blocks.size());
      fr.blocks_patch = uint32_t(fa.patch_cfg.blocks.size());
      for (const auto& bm : fa.ms.pairs)
        if (bm.perfect) ++fr.perfect_pairs;
      fr.refs_matched = uint32_t(fa.ms.matched_refs.size());
      for (const auto& w : fa.ms.warnings) fr.notes.push_back(w);

      reassemble::PatchPlan plan = reassemble::plan_and_reassemble(
          fa.ms, vuln, fixed, region, &fa.vuln_cfg, fa.patch_cfg, fa.patch_dfg, fa.patch_refs);

      // Patch-only callees get placed after the caller, then every recorded
      // call site is re-pointed at the final location.
      std::vector<std::pair<uint32_t, uint32_t>> queue = plan.pending_functions;
      while (!queue.empty()) {
        auto [hentry, call_site] = queue.back();
        queue.pop_back();
        auto it = placed_helpers.find(hentry);
        uint32_t placed;
        if (it != placed_helpers.end()) {
          placed = it->second;
        } else {
          Mode hmode = fixed.mode_hint(hentry).value_or(Mode::Thumb);
          flow::Cfg hcfg = flow::build_cfg(fixed, hentry, hmode);
          flow::Dfg hdfg = flow::build_dfg(fixed, hcfg);
          auto hrefs = flow::extract_references(fixed, hcfg, hdfg);
          match::MatchSet empty_ms;
          reassemble::ReassembleOptions ro;
          ro.whole_function = true;
          reassemble::PatchPlan hplan = reassemble::plan_and_reassemble(
              empty_ms, vuln, fixed, region, nullptr, hcfg, hdfg, hrefs, ro);
          placed = hplan.entry;
          placed_helpers[hentry] = placed;
          fr.code_bytes += hplan.bytes_emitted;
          for (const auto& ds : hplan.data_slots) fr.data_slots.insert(ds);
          for (auto& p : hplan.pending_functions) queue.push_back(p);
          std::string hname = fixed.symbol_at(hentry).value_or(hex(hentry));
          fr.helpers.push_back({hname, placed});
        }
        reassemble::retarget_branch(vuln, call_site, fa.patch_cfg.mode, placed);
      }

      fr.status = plan.noop ? "noop" : "patched";
      fr.redirect_at = plan.redirect.first;
      fr.redirect_to = plan.redirect.second;
      fr.replaced_lo = plan.replaced_lo;
      fr.replaced_hi = plan.replaced_hi;
      fr.function_lo = fa.vuln_cfg.lo;
      fr.function_hi = fa.vuln_cfg.hi;
      fr.code_bytes += plan.bytes_emitted;
      fr.shifts = plan.shift_ledger;
      for (const auto& ds : plan.data_slots) fr.data_slots.insert(ds);
      for (const auto& n : plan.notes) fr.notes.push_back(n);
      dump_function(opt, pr.name, fa, fixed, plan);
    } catch (const Error& e) {
      vuln = std::move(snapshot);
      region = region_snapshot;
      placed_helpers = std::move(helpers_snapshot);
      fr.status = std::string("aborted:") + errc_name(e.code());
      fr.notes.push_back(e.what());
      rep.ok = false;
    }
    rep.functions.push_back(std::move(fr));
  }

  rep.region_bytes_used = region.bytes_used();
  if (!opt.out_path.empty()) {
    vuln.emit(opt.out_path);
    rep.out_hash = fnv64_hex(vuln.bytes());
  }
  return rep;
}

std::string report_json(const PatchReport& r) {
  json j;
  j["report_version"] = r.report_version;
  j["inputs"] = {{"vulnerable", r.vuln_path}, {"fixed", r.fixed_path}};
  j["output"] = r.out_path;
  j["hashes"] = {{"vulnerable", r.vuln_hash}, {"fixed", r.fixed_hash}, {"output", r.out_hash}};
  if (!r.opt_hint.empty()) j["opt_hint"] = r.opt_hint;
  j["region"] = {{"vaddr", r.region_vaddr}, {"size", r.region_size},
                 {"bytes_used", r.region_bytes_used}};
  j["ok"] = r.ok;
  j["warnings"] = r.warnings;
  j["functions"] = json::array();
  for (const auto& f : r.functions) {
    json jf;
    jf["name"] = f.name;
    jf["status"] = f.status;
    jf["entries"] = {{"vulnerable", f.vuln_entry}, {"fixed", f.patch_entry}};
    jf["matched_by"] = f.matched_by;
    jf["match_score"] = f.match_score;
    jf["blocks"] = {{"vulnerable", f.blocks_vuln}, {"fixed", f.blocks_patch},
                    {"perfect_pairs", f.perfect_pairs}};
    jf["refs_matched"] = f.refs_matched;
    if (f.redirect_at)
      jf["redirect"] = {{"at", f.redirect_at}, {"to", f.redirect_to}};
    if (f.replaced_hi > f.replaced_lo)
      jf["replaced"] = {{"lo", f.replaced_lo}, {"hi", f.replaced_hi}};
    if (f.function_hi > f.function_lo)
      jf["function_interval"] = {{"lo", f.function_lo}, {"hi", f.function_hi}};
    jf["code_bytes"] = f.code_bytes;
    jf["shifts"] = json::array();
    for (const auto& s : f.shifts)
      jf["shifts"].push_back({{"at", s.at}, {"delta", s.delta}, {"cause", s.cause}});
    jf["data_slots"] = json::object();
    for (const auto& [from, to] : f.data_slots) jf["data_slots"][hex(from)] = to;
    jf["helpers"] = json::array();
    for (const auto& [n, a] : f.helpers) jf["helpers"].push_back({{"name", n}, {"at", a}});
    jf["notes"] = f.notes;
    j["functions"].push_back(jf);
  }
  return j.dump(2) + "\n";
}

std::vector<DiffEntry> diff_bytes(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  std::vector<DiffEntry> out;
  size_t common = std::min(a.size(), b.size());
  size_t i = 0;
  while (i < common) {
    if (a[i] == b[i]) {
      ++i;
      continue;
    }
    size_t start = i;
    size_t run_equal = 0;
    while (i < common && run_equal < 8) {  // merge nearby runs
      if (a[i] == b[i]) ++run_equal;
      else run_equal = 0;
      ++i;
    }
    out.push_back({uint32_t(start), uint32_t(i - run_equal - start), "changed"});
    i -= run_equal;
  }
  if (b.size() > a.size())
    out.push_back({uint32_t(a.size()), uint32_t(b.size() - a.size()), "appended"});
  else if (a.size() > b.size())
    out.push_back({uint32_t(b.size()), uint32_t(a.size() - b.size()), "truncated"});
  return out;
}

}  // namespace mend::pipeline
