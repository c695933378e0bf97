#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mend/interp.hpp"

namespace mend::corpus {

struct GroundTruthFn {
  std::string name;
  uint32_t entry = 0;
  std::vector<uint32_t> block_starts;
  // (src block, dst, kind) with kind 0=jump, 1=call, 2=fallthrough
  std::vector<std::array<uint32_t, 3>> edges;
};

struct CorpusCase {
  std::string name;
  std::string tmpl;
  std::vector<uint8_t> vuln_elf, fixed_elf;
  std::vector<std::string> affected;
  std::vector<GroundTruthFn> truth_vuln, truth_fixed;
  std::vector<interp::TestVector> vectors;
  std::optional<interp::TestVector> pov;
  bool stripped = false;
};

// Deterministic per seed; templates cycle: missing-bounds-check,
// added-fallback, new-string-diagnostic, widening-stressor,
// patch-only-helper, matched-global.
std::vector<CorpusCase> generate_corpus(uint32_t seed, uint32_t n);

void write_case(const CorpusCase& c, const std::string& dir);
CorpusCase read_case(const std::string& dir);

}  // namespace mend::corpus
