#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mend/flow.hpp"

namespace mend::match {

using elf::BinaryImage;
using flow::BasicBlock;
using flow::Cfg;
using flow::Reference;

struct FunctionPair {
  std::string name;
  uint32_t vuln_entry = 0;
  uint32_t patch_entry = 0;
  enum class How : uint8_t { Symbol, Similarity } how = How::Symbol;
  double score = 1.0;
};

struct BlockMatch {
  std::optional<uint32_t> vuln_start;   // absent: block only exists in patch
  std::optional<uint32_t> patch_start;  // absent: block only exists in vuln
  bool perfect = false;
};

struct MatchSet {
  std::vector<BlockMatch> pairs;
  // Patch-side reference -> corresponding vuln-side reference (dst rebased
  // into the vulnerable module).
  std::map<Reference, Reference> matched_refs;
  std::vector<uint32_t> patch_region;  // patch block starts, ascending
  uint32_t patch_region_lo = 0, patch_region_hi = 0;  // [lo, hi)
  uint32_t vuln_region_lo = 0, vuln_region_hi = 0;    // [lo, hi), may be empty
  std::vector<std::string> warnings;

  std::optional<uint32_t> vuln_for(uint32_t patch_start) const;
  std::optional<uint32_t> patch_for(uint32_t vuln_start) const;
  bool perfect_pair(uint32_t patch_start) const;
};

std::vector<FunctionPair> match_functions(const BinaryImage& vuln, const BinaryImage& fixed,
                                          const std::vector<std::string>& names,
                                          std::vector<std::string>* warnings = nullptr);

bool is_perfect_match(const BasicBlock& a, const BasicBlock& b);

// Greedy structural pairing seeded at the two entries, with regions derived
// from the span of non-perfect blocks.
MatchSet match_blocks(const Cfg& vuln_cfg, const Cfg& patch_cfg);

MatchSet& match_references(MatchSet& ms, const Cfg& vuln_cfg, const Cfg& patch_cfg,
                           const std::vector<Reference>& refs_vuln,
                           const std::vector<Reference>& refs_patch,
                           const BinaryImage& vuln, const BinaryImage& fixed);

}  // namespace mend::match
