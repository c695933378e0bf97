#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mend/isa.hpp"

namespace mend::fixture {

// Small two-pass assembler for building test functions. Labels and literal
// pool slots are resolved by iterating placement until widths settle.
class Asm {
public:
  explicit Asm(isa::Mode mode = isa::Mode::Thumb) : mode_(mode) {}

  int label();
  void bind(int l);

  void ins(isa::InstrSpec spec, uint8_t min_w = 0);
  void b(isa::Cond c, int l, uint8_t min_w = 0);
  void bl(uint32_t abs_target);
  int lit(uint32_t value);                 // pool word appended after the code
  void ldr_lit(uint8_t rd, int lit_id);
  void set_lit(int lit_id, uint32_t value);

  // Lays the function out at `at` and returns its bytes (code + pool).
  std::vector<uint8_t> assemble(uint32_t at);

  uint32_t label_addr(int l) const;
  uint32_t lit_addr(int lit_id) const;
  uint32_t item_addr(size_t index) const;  // address of the n-th instruction
  size_t item_count() const { return items_.size(); }

  // Declared control-flow facts for ground-truth manifests, derived from the
  // assembler's own records rather than any analysis code.
  struct Fact {
    uint32_t addr = 0;
    uint8_t width = 0;
    bool is_branch = false, conditional = false, is_call = false, is_terminator = false;
    uint32_t target = 0;  // branches and calls
  };
  std::vector<Fact> facts() const;

private:
  struct Item {
    isa::InstrSpec spec;
    uint8_t min_w = 0;
    int target_label = -1;
    int lit_id = -1;
    uint32_t addr = 0;
    uint8_t width = 2;
  };
  isa::Mode mode_;
  std::vector<Item> items_;
  std::map<int, size_t> binds_;  // label -> index of the following item
  std::vector<uint32_t> literals_;
  std::vector<uint32_t> lit_addrs_;
  int next_label_ = 0;
  uint32_t pool_at_ = 0, end_ = 0, start_ = 0;
  bool laid_out_ = false;
};

// Minimal ARM ELF32 writer: one RX load segment holding .text/.plt/.rodata/
// .data, plus symbol tables and a conventional .plt/.rel.plt/.dynsym trio so
// external callees resolve to named stubs.
class ElfBuilder {
public:
  explicit ElfBuilder(uint32_t base_vaddr = 0x10000);

  uint32_t here() const { return base_ + uint32_t(content_.size()); }
  void align(uint32_t a, uint8_t fill = 0);
  uint32_t bytes(const std::vector<uint8_t>& data);
  uint32_t cstr(const std::string& s);  // NUL-terminated, padded to a double NUL
  uint32_t word(uint32_t v);

  void begin_section(const std::string& name);  // mapped PROGBITS section

  void func_symbol(const std::string& name, uint32_t addr);  // thumb entry
  void obj_symbol(const std::string& name, uint32_t addr);
  void thumb_at(uint32_t addr);  // mapping symbol

  // Must be called before code that calls the stubs; emits the .plt bytes.
  void add_externals(const std::vector<std::string>& names);
  uint32_t plt_addr(const std::string& name) const;

  std::vector<uint8_t> build(bool strip_func_symbols = false) const;

private:
  uint32_t base_;
  std::vector<uint8_t> content_;
  struct Sec {
    std::string name;
    uint32_t start = 0, end = 0;
  };
  std::vector<Sec> secs_;
  std::vector<std::pair<std::string, uint32_t>> funcs_, objs_;
  std::vector<uint32_t> thumb_marks_;
  std::vector<std::string> externals_;
  uint32_t plt_vaddr_ = 0;
};

}  // namespace mend::fixture
