#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mend/elf_image.hpp"

namespace mend::interp {

using elf::BinaryImage;
using isa::Mode;

// Address that signals "returned from the function under test".
inline constexpr uint32_t kReturnSentinel = 0xfffff001;

struct TestVector {
  std::string name;
  uint32_t entry = 0;
  uint32_t entry_alt = 0;  // entry in the reference image, when layouts differ
  uint32_t fuel = 10000;
  std::map<uint8_t, uint32_t> regs;        // initial registers
  std::map<uint32_t, uint8_t> memory;      // initial memory overlay
  std::vector<uint8_t> out_regs;           // registers compared after return
  std::vector<uint32_t> out_memory;        // addresses compared after return
  std::vector<std::string> out_syms;       // globals compared by symbol name
};

struct CallRecord {
  std::string callee;
  std::array<uint32_t, 4> args{};
  bool operator==(const CallRecord&) const = default;
};

struct MachineState {
  std::array<uint32_t, 16> regs{};
  bool n = false, z = false, c = false, v = false;
  std::map<uint32_t, uint8_t> mem;  // overlay over the image
  Mode mode = Mode::Thumb;
  uint64_t steps = 0;
  std::vector<CallRecord> trace;
};

MachineState interpret(const BinaryImage& img, const TestVector& vec);

// Outcome of a run including faults, for differential comparison.
struct Outcome {
  bool faulted = false;
  Errc fault = Errc::UndefinedInstruction;
  std::map<uint8_t, uint32_t> out_regs;
  std::map<uint32_t, uint8_t> out_memory;
  std::map<std::string, uint32_t> out_globals;  // by symbol name
  std::vector<CallRecord> trace;

  bool operator==(const Outcome&) const = default;
};

Outcome run_outcome(const BinaryImage& img, const TestVector& vec);

struct Verdict {
  std::string vector_name;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> differential_check(const BinaryImage& patched, const BinaryImage& fixed,
                                        const std::vector<TestVector>& vectors);

}  // namespace mend::interp
