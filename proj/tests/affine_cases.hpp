#pragma once

// Random affine equation systems over a single literal slot, plus an
// independent forward evaluator used to validate solver results.

#include <cstdint>
#include <map>
#include <random>

#include "mend/slice.hpp"

namespace affine_cases {

using mend::slice::EquationSystem;
using mend::slice::IrOperand;
using mend::slice::IrStmt;

struct Case {
  EquationSystem sys;
  uint32_t slot = 0;        // the one literal slot vaddr
  uint32_t seed_value = 0;  // slot word used to produce sys.required
};

// Straightforward interpretation of the equation list.
inline uint32_t evaluate(const EquationSystem& sys, uint32_t slot_value) {
  std::map<uint32_t, uint32_t> env;
  auto val = [&](const IrOperand& o) -> uint32_t {
    switch (o.kind) {
      case IrOperand::Kind::Const: return o.value;
      case IrOperand::Kind::Slot: return slot_value;
      case IrOperand::Kind::Var: return env.at(o.id);
    }
    return 0;
  };
  for (const auto& eq : sys.equations) {
    uint32_t v = val(eq.srcs.at(0));
    if (eq.op == IrStmt::Op::IntAdd) v += val(eq.srcs.at(1));
    env[eq.dst] = v;
  }
  return env.at(sys.target_var);
}

// Chain of depth 1..max_depth rooted at a slot load. Constants, variable
// reuse, and repeated slot occurrences keep the slot coefficient in 1..2^5.
inline Case random_case(std::mt19937& rng, uint32_t max_depth = 6) {
  Case c;
  c.slot = 0x20000 + (rng() % 0x1000) * 4;
  uint32_t depth = 1 + rng() % max_depth;

  c.sys.equations.push_back({1, IrStmt::Op::Load, {IrOperand::slot(c.slot)}});
  for (uint32_t v = 2; v <= depth; ++v) {
    uint32_t prev = 1 + rng() % (v - 1);
    switch (rng() % 4) {
      case 0:
        c.sys.equations.push_back({v, IrStmt::Op::Copy, {IrOperand::var(prev)}});
        break;
      case 1:
        c.sys.equations.push_back(
            {v, IrStmt::Op::IntAdd, {IrOperand::var(prev), IrOperand::constant(rng())}});
        break;
      case 2: {
        uint32_t other = 1 + rng() % (v - 1);
        c.sys.equations.push_back(
            {v, IrStmt::Op::IntAdd, {IrOperand::var(prev), IrOperand::var(other)}});
        break;
      }
      default:
        c.sys.equations.push_back(
            {v, IrStmt::Op::IntAdd, {IrOperand::var(prev), IrOperand::slot(c.slot)}});
        break;
    }
  }
  c.sys.target_var = depth;
  c.seed_value = rng();
  c.sys.required = evaluate(c.sys, c.seed_value);
  return c;
}

}  // namespace affine_cases
