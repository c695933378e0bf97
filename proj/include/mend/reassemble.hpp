#pragma once

#include <optional>

#include "mend/match.hpp"
#include "mend/slice.hpp"

namespace mend::reassemble {

using elf::BinaryImage;
using elf::PatchRegion;

struct ShiftRecord {
  uint32_t at = 0;      // placed address of the widened instruction
  uint32_t delta = 0;   // bytes added (even)
  uint32_t cause = 0;   // original patch-side address
};

struct PatchPlan {
  std::string function;
  std::map<uint32_t, uint32_t> placements;  // patch instr addr -> placed addr
  std::vector<ShiftRecord> shift_ledger;
  std::map<uint32_t, uint32_t> data_slots;  // patch memloc vaddr -> new vaddr
  std::vector<std::pair<uint32_t, uint32_t>> pending_functions;  // (patch entry, call site)
  std::pair<uint32_t, uint32_t> redirect{0, 0};  // (vuln addr, region target); 0,0 = none
  uint32_t replaced_lo = 0, replaced_hi = 0;     // vulnerable interval overwritten
  std::vector<std::pair<uint32_t, uint32_t>> return_branches;  // (placed addr, vuln target)
  uint32_t entry = 0;          // placed entry of the reassembled code
  uint32_t bytes_emitted = 0;  // code bytes written into the region
  bool noop = false;
  std::vector<std::string> notes;
};

struct ReassembleOptions {
  bool whole_function = false;  // emit the entire patch-side function (pending helper)
};

// Runs the per-instruction rewrite pipeline over the patch region, fixes up
// widening shifts to a fixpoint, writes code/data into the region, and plants
// the redirect branch over the vulnerable bytes.
PatchPlan plan_and_reassemble(const match::MatchSet& ms, BinaryImage& vuln,
                              const BinaryImage& fixed, PatchRegion& region,
                              const flow::Cfg* vuln_cfg, const flow::Cfg& patch_cfg,
                              const flow::Dfg& patch_dfg,
                              const std::vector<flow::Reference>& refs_patch,
                              const ReassembleOptions& opt = {});

// Bytes at vaddr up to and including the first of two consecutive nulls.
std::vector<uint8_t> load_data_from(const BinaryImage& fixed, uint32_t vaddr);

// Re-points an already-emitted branch or call at `addr` without changing its
// width; used to resolve calls into functions placed later.
void retarget_branch(BinaryImage& img, uint32_t addr, isa::Mode mode, uint32_t new_target);

}  // namespace mend::reassemble
