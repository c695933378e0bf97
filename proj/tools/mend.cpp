#include <cstdio>
#include <fstream>

#include <CLI11.hpp>

#include "mend/corpus.hpp"
#include "mend/match.hpp"
#include "mend/pipeline.hpp"

using namespace mend;

namespace {

int cmd_patch(const pipeline::Options& opt, const std::string& report_path) {
  pipeline::PatchReport rep;
  try {
    rep = pipeline::run_patch(opt);
  } catch (const Error& e) {
    fprintf(stderr, "mend: %s\n", e.what());
    return e.code() == Errc::IoError || e.code() == Errc::NotElf ? 2 : 1;
  }
  std::string json = pipeline::report_json(rep);
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::trunc);
    out << json;
  } else {
    fputs(json.c_str(), stdout);
  }
  for (const auto& f : rep.functions)
    fprintf(stderr, "%s: %s\n", f.name.c_str(), f.status.c_str());
  return rep.ok ? 0 : 1;
}

int cmd_diff(const std::string& vuln_path, const std::string& fixed_path,
             const std::vector<std::string>& names) {
  elf::BinaryImage vuln = elf::BinaryImage::load(vuln_path);
  elf::BinaryImage fixed = elf::BinaryImage::load(fixed_path);
  std::vector<std::string> warnings;
  int rc = 0;
  for (const auto& name : names) {
    try {
      auto pr = match::match_functions(vuln, fixed, {name}, &warnings).at(0);
      auto vmode = vuln.mode_hint(pr.vuln_entry).value_or(isa::Mode::Thumb);
      auto pmode = fixed.mode_hint(pr.patch_entry).value_or(isa::Mode::Thumb);
      flow::Cfg vcfg = flow::build_cfg(vuln, pr.vuln_entry, vmode);
      flow::Cfg pcfg = flow::build_cfg(fixed, pr.patch_entry, pmode);
      match::MatchSet ms = match::match_blocks(vcfg, pcfg);

      uint32_t perfect = 0, vuln_only = 0, patch_only = 0;
      for (const auto& p : ms.pairs) {
        if (p.perfect) ++perfect;
        if (!p.vuln_start) ++patch_only;
        if (!p.patch_start) ++vuln_only;
      }
      printf("%s: matched by %s%s\n", name.c_str(),
             pr.how == match::FunctionPair::How::Symbol ? "symbol" : "similarity",
             pr.how == match::FunctionPair::How::Similarity
                 ? (" (score " + std::to_string(pr.score) + ")").c_str()
                 : "");
      printf("  blocks: %zu vulnerable, %zu fixed, %u perfect pairs, %u only-vulnerable, "
             "%u only-fixed\n",
             vcfg.blocks.size(), pcfg.blocks.size(), perfect, vuln_only, patch_only);
      if (ms.patch_region.empty()) {
        printf("  patch region: empty\n");
      } else {
        printf("  patch region: [%s, %s) %zu blocks; replaces [%s, %s)\n",
               hex(ms.patch_region_lo).c_str(), hex(ms.patch_region_hi).c_str(),
               ms.patch_region.size(), hex(ms.vuln_region_lo).c_str(),
               hex(ms.vuln_region_hi).c_str());
      }
      for (const auto& w : ms.warnings) printf("  warning: %s\n", w.c_str());
    } catch (const Error& e) {
      printf("%s: %s\n", name.c_str(), e.what());
      rc = 1;
    }
  }
  for (const auto& w : warnings) printf("warning: %s\n", w.c_str());
  return rc;
}

int cmd_verify(const std::string& patched_path, const std::string& fixed_path,
               const std::string& case_dir) {
  corpus::CorpusCase c = corpus::read_case(case_dir);
  elf::BinaryImage patched = elf::BinaryImage::load(patched_path);
  elf::BinaryImage fixed = elf::BinaryImage::load(fixed_path);

  std::vector<interp::TestVector> vecs = c.vectors;
  if (c.pov) vecs.push_back(*c.pov);
  if (vecs.empty()) {
    fprintf(stderr, "warning: case '%s' declares no test vectors\n", c.name.c_str());
    return 0;
  }
  auto verdicts = interp::differential_check(patched, fixed, vecs);
  int rc = 0;
  for (const auto& v : verdicts) {
    printf("%s: %s%s%s\n", v.vector_name.c_str(), v.pass ? "pass" : "FAIL",
           v.detail.empty() ? "" : " ", v.detail.c_str());
    if (!v.pass) rc = 1;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transplant fixed basic blocks into a vulnerable ARM binary"};
  app.require_subcommand(1);

  pipeline::Options opt;
  std::string report_path;
  auto* patch = app.add_subcommand("patch", "apply the fix to the vulnerable binary");
  patch->add_option("vulnerable", opt.vuln_path, "vulnerable ELF")->required();
  patch->add_option("fixed", opt.fixed_path, "self-compiled fixed ELF")->required();
  patch->add_option("-o,--out", opt.out_path, "patched output path")->required();
  patch->add_option("-f,--function", opt.functions, "affected function name(s)")->required();
  patch->add_option("--report", report_path, "write the JSON report here (default stdout)");
  patch->add_option("--region-size", opt.region_size, "patch region size in bytes");
  patch->add_option("--opt-hint", opt.opt_hint, "fixed binary's optimization level, recorded")
      ->check(CLI::IsMember({"O1", "O2", "Os", "O3"}));
  patch->add_flag("--dump-graphs", opt.dump_graphs, "write flow graph dumps");
  patch->add_flag("--dump-slices", opt.dump_slices, "write backward slice dumps");
  patch->add_option("--dump-dir", opt.dump_dir, "directory for dump files");

  std::string d_vuln, d_fixed;
  std::vector<std::string> d_funcs;
  auto* diff = app.add_subcommand("diff", "report block matching without editing anything");
  diff->add_option("vulnerable", d_vuln, "vulnerable ELF")->required();
  diff->add_option("fixed", d_fixed, "self-compiled fixed ELF")->required();
  diff->add_option("-f,--function", d_funcs, "affected function name(s)")->required();

  std::string v_patched, v_fixed, v_case;
  auto* verify = app.add_subcommand("verify", "run a case's vectors against a patched binary");
  verify->add_option("patched", v_patched, "patched ELF")->required();
  verify->add_option("fixed", v_fixed, "reference fixed ELF")->required();
  verify->add_option("--case", v_case, "corpus case directory with manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (patch->parsed()) return cmd_patch(opt, report_path);
    if (diff->parsed()) return cmd_diff(d_vuln, d_fixed, d_funcs);
    return cmd_verify(v_patched, v_fixed, v_case);
  } catch (const Error& e) {
    fprintf(stderr, "mend: %s\n", e.what());
    return e.code() == Errc::IoError || e.code() == Errc::NotElf || e.code() == Errc::Usage ? 2
                                                                                            : 1;
  }
}
