#pragma once

// Minimal single-function ELF images for unit tests.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mend/elf_image.hpp"
#include "mend/fixture.hpp"

namespace images {

// Working directory for tests that need real files (created under the cwd,
// which is the build tree when run through ctest).
inline std::string scratch_dir(const std::string& name) {
  auto p = std::filesystem::path("test_scratch") / name;
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string write_file(const std::string& dir, const std::string& fname,
                              const std::vector<uint8_t>& bytes) {
  std::string path = dir + "/" + fname;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  return path;
}

inline mend::elf::BinaryImage make_image(
    uint32_t base, const std::string& fname, const std::vector<uint8_t>& code,
    const std::vector<std::pair<std::string, std::vector<uint32_t>>>& data = {},
    bool strip = false) {
  mend::fixture::ElfBuilder eb(base);
  eb.begin_section(".text");
  eb.thumb_at(base);
  eb.func_symbol(fname, base);
  eb.bytes(code);
  eb.align(4);
  eb.begin_section(".data");
  for (const auto& [n, ws] : data) {
    eb.obj_symbol(n, eb.here());
    for (uint32_t w : ws) eb.word(w);
  }
  return mend::elf::BinaryImage::from_bytes(eb.build(strip));
}

// Independent program-header view, straight off the ELF32 byte layout.
struct RawPhdr {
  uint32_t type = 0, offset = 0, vaddr = 0, filesz = 0, memsz = 0, flags = 0;
};

inline uint32_t rd16(const std::vector<uint8_t>& b, size_t o) {
  return uint32_t(b.at(o)) | (uint32_t(b.at(o + 1)) << 8);
}
inline uint32_t rd32(const std::vector<uint8_t>& b, size_t o) {
  return rd16(b, o) | (rd16(b, o + 2) << 16);
}

inline std::vector<RawPhdr> raw_phdrs(const std::vector<uint8_t>& b) {
  uint32_t phoff = rd32(b, 0x1c), phentsize = rd16(b, 0x2a), phnum = rd16(b, 0x2c);
  std::vector<RawPhdr> out;
  for (uint32_t i = 0; i < phnum; ++i) {
    size_t p = phoff + size_t(i) * phentsize;
    out.push_back({rd32(b, p), rd32(b, p + 4), rd32(b, p + 8), rd32(b, p + 16),
                   rd32(b, p + 20), rd32(b, p + 24)});
  }
  return out;
}

// File ranges occupied by the ELF header and the program/section header tables.
inline std::vector<std::pair<uint32_t, uint32_t>> header_ranges(const std::vector<uint8_t>& b) {
  std::vector<std::pair<uint32_t, uint32_t>> out;
  out.push_back({0, 0x34});
  uint32_t phoff = rd32(b, 0x1c), phentsize = rd16(b, 0x2a), phnum = rd16(b, 0x2c);
  if (phnum) out.push_back({phoff, phoff + phnum * phentsize});
  uint32_t shoff = rd32(b, 0x20), shentsize = rd16(b, 0x2e), shnum = rd16(b, 0x30);
  if (shnum) out.push_back({shoff, shoff + shnum * shentsize});
  return out;
}

// Address of the first data word when laid out by make_image.
inline uint32_t data_base(uint32_t base, const std::vector<uint8_t>& code) {
  return (base + uint32_t(code.size()) + 3) & ~3u;
}

}  // namespace images
