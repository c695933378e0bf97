#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mend/error.hpp"
#include "mend/isa.hpp"

namespace mend::elf {

struct Segment {
  enum class Kind : uint8_t { Load, Dynamic, Other };
  Kind kind = Kind::Other;
  uint32_t offset = 0, vaddr = 0, filesz = 0, memsz = 0;
  uint32_t flags = 0;  // PF_X=1, PF_W=2, PF_R=4
  size_t phdr_index = 0;

  bool executable() const { return flags & 1; }
  bool contains_vaddr(uint32_t a) const { return a >= vaddr && a - vaddr < filesz; }
};

struct Section {
  std::string name;
  uint32_t type = 0, flags = 0, addr = 0, offset = 0, size = 0, link = 0, entsize = 0;
};

struct SymInfo {
  uint32_t vaddr = 0;
  enum class Kind : uint8_t { Func, Object, Other } kind = Kind::Other;
};

// Space carved out (or appended) for reassembled code and relocated data.
// Code grows upward from the base, data grows downward from the end.
struct PatchRegion {
  uint32_t vaddr = 0;
  uint32_t size = 0;
  uint32_t code_cursor = 0;  // offset of next free code byte
  uint32_t data_cursor = 0;  // offset one past the last free data byte

  uint32_t code_base() const { return vaddr + code_cursor; }
  uint32_t alloc_code(uint32_t n, uint32_t align = 2);
  uint32_t alloc_data(uint32_t n, uint32_t align = 4);
  uint32_t bytes_used() const { return code_cursor + (size - data_cursor); }
};

class BinaryImage {
public:
  static BinaryImage load(const std::string& path);
  static BinaryImage from_bytes(std::vector<uint8_t> bytes, std::string name = "<mem>");

  void emit(const std::string& path) const;

  const std::string& path() const { return path_; }
  const std::vector<uint8_t>& bytes() const { return bytes_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Section>& sections() const { return sections_; }
  const std::map<std::string, SymInfo>& symbols() const { return symbols_; }
  const std::map<uint32_t, std::string>& got_entries() const { return got_entries_; }
  const std::map<uint32_t, std::string>& plt_stubs() const { return plt_stubs_; }
  const std::map<uint32_t, isa::Mode>& entry_mode_hints() const { return mode_hints_; }

  bool is_mapped(uint32_t vaddr, uint32_t len = 1) const;
  uint32_t to_offset(uint32_t vaddr) const;  // fails with UnmappedAddress

  std::vector<uint8_t> read(uint32_t vaddr, uint32_t len) const;
  std::span<const uint8_t> view(uint32_t vaddr, uint32_t max_len) const;
  uint32_t read_u32(uint32_t vaddr) const;

  // Editable-range enforced write (patch region / replaced vulnerable code).
  void write(uint32_t vaddr, std::span<const uint8_t> data);
  void allow_edits(uint32_t vaddr, uint32_t len);

  PatchRegion alloc_patch_region(uint32_t min_size);

  std::optional<uint32_t> symbol_addr(const std::string& name) const;
  std::optional<std::string> symbol_at(uint32_t vaddr) const;
  std::optional<isa::Mode> mode_hint(uint32_t vaddr) const;

private:
  void parse();
  void parse_sections();
  void parse_symbols();
  void parse_got_plt();
  void patch_u32_at_offset(uint32_t off, uint32_t value);

  std::string path_;
  std::vector<uint8_t> bytes_;
  std::vector<Segment> segments_;
  std::vector<Section> sections_;
  std::map<std::string, SymInfo> symbols_;
  std::map<uint32_t, std::string> got_entries_;
  std::map<uint32_t, std::string> plt_stubs_;
  std::map<uint32_t, isa::Mode> mode_hints_;
  std::vector<std::pair<uint32_t, uint32_t>> editable_;  // [vaddr, len)
  uint32_t phoff_ = 0, phnum_ = 0, shoff_ = 0, shnum_ = 0, shstrndx_ = 0;
};

}  // namespace mend::elf
