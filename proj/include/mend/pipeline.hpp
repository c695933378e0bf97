#pragma once

#include <map>
#include <string>
#include <vector>

#include "mend/interp.hpp"
#include "mend/reassemble.hpp"

namespace mend::pipeline {

using elf::BinaryImage;

struct Options {
  std::string vuln_path, fixed_path, out_path;
  std::vector<std::string> functions;  // names to transplant
  uint32_t region_size = 4096;
  std::string opt_hint;  // recorded in the report, not interpreted
  bool dump_graphs = false, dump_slices = false;
  std::string dump_dir = ".";
};

struct FunctionReport {
  std::string name;
  std::string status;  // patched | noop | aborted:<reason>
  uint32_t vuln_entry = 0, patch_entry = 0;
  std::string matched_by;  // symbol | similarity
  double match_score = 1.0;
  uint32_t blocks_vuln = 0, blocks_patch = 0, perfect_pairs = 0;
  uint32_t refs_matched = 0;
  uint32_t redirect_at = 0, redirect_to = 0;
  uint32_t replaced_lo = 0, replaced_hi = 0;
  uint32_t function_lo = 0, function_hi = 0;  // vulnerable-side interval
  uint32_t code_bytes = 0;
  std::vector<reassemble::ShiftRecord> shifts;
  std::map<uint32_t, uint32_t> data_slots;
  std::vector<std::pair<std::string, uint32_t>> helpers;  // name -> placed entry
  std::vector<std::string> notes;
};

struct PatchReport {
  int report_version = 1;
  std::string vuln_path, fixed_path, out_path;
  std::string vuln_hash, fixed_hash, out_hash;
  std::string opt_hint;
  uint32_t region_vaddr = 0, region_size = 0, region_bytes_used = 0;
  std::vector<FunctionReport> functions;
  std::vector<std::string> warnings;
  bool ok = false;  // every requested function patched or noop
};

// Loads both binaries, transplants each requested function, writes the
// patched output, and returns the report. Per-function failures roll the
// image back and are recorded as aborted entries.
PatchReport run_patch(const Options& opt);

std::string report_json(const PatchReport& r);

struct DiffEntry {
  uint32_t offset = 0, size = 0;
  std::string kind;  // changed | appended | truncated
};

std::vector<DiffEntry> diff_bytes(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

std::string fnv64_hex(const std::vector<uint8_t>& bytes);

}  // namespace mend::pipeline
