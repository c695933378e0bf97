#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mend/elf_image.hpp"
#include "mend/isa.hpp"

namespace mend::flow {

using elf::BinaryImage;
using isa::Instr;
using isa::Mode;

enum class Terminator : uint8_t { Jump, Return, CallThrough, Fallthrough };

struct BasicBlock {
  uint32_t id = 0;
  uint32_t start = 0;
  std::vector<Instr> instrs;
  Terminator terminator = Terminator::Fallthrough;

  uint32_t end() const {  // one past the last instruction byte
    return instrs.empty() ? start : instrs.back().addr + instrs.back().width;
  }
};

enum class EdgeKind : uint8_t { Jump, Call, Fallthrough };

struct Edge {
  uint32_t src = 0, dst = 0;  // block start addresses
  EdgeKind kind = EdgeKind::Jump;
  auto operator<=>(const Edge&) const = default;
};

struct Cfg {
  uint32_t entry = 0;
  Mode mode = Mode::Thumb;
  std::map<uint32_t, BasicBlock> blocks;  // keyed by start address
  std::set<Edge> edges;
  uint32_t lo = 0, hi = 0;  // function address interval [lo, hi)

  const BasicBlock* block_at(uint32_t start) const;
  const BasicBlock* block_containing(uint32_t addr) const;
  const Instr* instr_at(uint32_t addr) const;
  bool in_function(uint32_t addr) const { return addr >= lo && addr < hi; }
};

struct MemLoc {
  enum class Kind : uint8_t { Register, StackSlot, Global, HeapSummary };
  Kind kind = Kind::Register;
  // Register: register number; StackSlot: offset from function-entry SP
  // (negative grows down); Global: module vaddr; HeapSummary: 0.
  int64_t key = 0;

  auto operator<=>(const MemLoc&) const = default;
  static MemLoc reg(uint8_t r) { return {Kind::Register, r}; }
  static MemLoc stack(int32_t off) { return {Kind::StackSlot, off}; }
  static MemLoc global(uint32_t vaddr) { return {Kind::Global, vaddr}; }
  static MemLoc heap() { return {Kind::HeapSummary, 0}; }
  std::string text() const;
};

// Pseudo-register used to model condition flags as a def/use location.
inline constexpr uint8_t FLAGS_REG = 16;

struct DfgEdge {
  uint32_t def_addr = 0, use_addr = 0;
  MemLoc loc;
  auto operator<=>(const DfgEdge&) const = default;
};

struct Dfg {
  std::set<DfgEdge> edges;
  // Per-instruction constant values recovered by local propagation
  // (register -> known 32-bit value after the instruction executes).
  std::map<uint32_t, std::map<uint8_t, uint32_t>> known_after;

  std::vector<DfgEdge> defs_reaching(uint32_t use_addr, const MemLoc& loc) const;
};

struct Reference {
  enum class Kind : uint8_t { Control, Data };
  Kind kind = Kind::Control;
  uint32_t src = 0;  // source instruction address
  uint32_t dst = 0;  // destination instruction or target address
  MemLoc memloc;     // data references only; kind Global
  bool dest_in_function = false;

  auto operator<=>(const Reference&) const = default;
};

// Per-instruction def/use summary used by the DFG pass and the slicer.
struct DefUse {
  std::vector<MemLoc> defs, uses;
  bool writes_mem = false, reads_mem = false;
};

DefUse def_use(const Instr& ins, const std::optional<int32_t>& sp_offset);

Cfg build_cfg(const BinaryImage& img, uint32_t entry, Mode mode);
Dfg build_dfg(const BinaryImage& img, const Cfg& cfg);
std::vector<Reference> extract_references(const BinaryImage& img, const Cfg& cfg, const Dfg& dfg);

// Stack-pointer offset from function entry at each instruction, when the
// frame follows the supported single-setup discipline.
std::map<uint32_t, int32_t> track_stack(const Cfg& cfg);

std::string dump_graphs(const Cfg& cfg, const Dfg& dfg);

}  // namespace mend::flow
