#pragma once

#include <map>
#include <string>
#include <vector>

#include "mend/flow.hpp"

namespace mend::slice {

using elf::BinaryImage;
using flow::Cfg;
using flow::Dfg;
using flow::MemLoc;
using flow::Reference;

struct IrOperand {
  enum class Kind : uint8_t { Var, Slot, Const };
  Kind kind = Kind::Const;
  uint32_t id = 0;     // var id (Var) or slot vaddr (Slot)
  uint32_t value = 0;  // Const only

  static IrOperand var(uint32_t v) { return {Kind::Var, v, 0}; }
  static IrOperand slot(uint32_t vaddr) { return {Kind::Slot, vaddr, 0}; }
  static IrOperand constant(uint32_t c) { return {Kind::Const, 0, c}; }
};

struct IrStmt {
  enum class Op : uint8_t { Copy, IntAdd, Load, Other } op = Op::Copy;
  uint32_t dst = 0;  // var id, assigned once
  std::vector<IrOperand> srcs;
};

struct SliceStmt {
  isa::Instr instr;  // source instruction (addr is the original address)
  std::vector<IrStmt> ir;
};

struct Slice {
  std::vector<SliceStmt> stmts;  // dependency order, defs before uses
  uint32_t target_var = 0;       // value consumed by the reference destination
  std::map<uint32_t, std::string> var_names;  // for dumps
};

struct Equation {
  uint32_t dst = 0;
  IrStmt::Op op = IrStmt::Op::Copy;
  std::vector<IrOperand> srcs;
};

struct EquationSystem {
  std::vector<Equation> equations;
  uint32_t target_var = 0;
  uint32_t required = 0;
  std::map<uint32_t, std::string> var_names;
};

struct SolveResult {
  std::vector<std::pair<MemLoc, uint32_t>> assignments;  // literal slot -> word
};

// Backward def-use closure from a data reference, with PC constants taken
// from the planned placement (old address -> new address).
Slice backward_slice(const BinaryImage& img, const Cfg& cfg, const Dfg& dfg,
                     const Reference& ref, const std::map<uint32_t, uint32_t>& placement);

EquationSystem build_equations(const Slice& s, uint32_t required);

SolveResult solve(const EquationSystem& sys);

std::string dump(const Slice& s);
std::string dump(const EquationSystem& sys);

}  // namespace mend::slice
