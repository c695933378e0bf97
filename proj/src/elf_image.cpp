#include "mend/elf_image.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace mend::elf {

namespace {

constexpr uint32_t PT_LOAD = 1, PT_DYNAMIC = 2;
constexpr uint32_t SHT_SYMTAB = 2, SHT_STRTAB = 3, SHT_REL = 9, SHT_DYNSYM = 11;
constexpr uint16_t EM_ARM = 40;
constexpr uint32_t EHDR_SIZE = 52, PHDR_SIZE = 32, SHDR_SIZE = 40;

uint16_t rd16(const std::vector<uint8_t>& b, size_t off) {
  return uint16_t(b[off] | (b[off + 1] << 8));
}

uint32_t rd32(const std::vector<uint8_t>& b, size_t off) {
  return uint32_t(b[off]) | (uint32_t(b[off + 1]) << 8) | (uint32_t(b[off + 2]) << 16) |
         (uint32_t(b[off + 3]) << 24);
}

void wr32(std::vector<uint8_t>& b, size_t off, uint32_t v) {
  b[off] = uint8_t(v);
  b[off + 1] = uint8_t(v >> 8);
  b[off + 2] = uint8_t(v >> 16);
  b[off + 3] = uint8_t(v >> 24);
}

void wr16(std::vector<uint8_t>& b, size_t off, uint16_t v) {
  b[off] = uint8_t(v);
  b[off + 1] = uint8_t(v >> 8);
}

uint32_t align_up(uint32_t v, uint32_t a) { return (v + a - 1) & ~(a - 1); }

}  // namespace

uint32_t PatchRegion::alloc_code(uint32_t n, uint32_t align) {
  uint32_t at = align_up(code_cursor, align);
  if (at + n > data_cursor)
    fail(Errc::RegionOverflow, "patch region code allocation of " + std::to_string(n));
  code_cursor = at + n;
  return vaddr + at;
}

uint32_t PatchRegion::alloc_data(uint32_t n, uint32_t align) {
  if (data_cursor < n) fail(Errc::RegionOverflow, "patch region data allocation");
  uint32_t at = (data_cursor - n) & ~(align - 1);
  if (at < code_cursor) fail(Errc::RegionOverflow, "patch region data allocation");
  data_cursor = at;
  return vaddr + at;
}

BinaryImage BinaryImage::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  BinaryImage img = from_bytes(std::move(bytes), path);
  return img;
}

BinaryImage BinaryImage::from_bytes(std::vector<uint8_t> bytes, std::string name) {
  BinaryImage img;
  img.path_ = std::move(name);
  img.bytes_ = std::move(bytes);
  img.parse();
  return img;
}

void BinaryImage::parse() {
  const auto& b = bytes_;
  if (b.size() < 16 || b[0] != 0x7f || b[1] != 'E' || b[2] != 'L' || b[3] != 'F')
    fail(Errc::NotElf, path_);
  if (b[4] != 1) fail(Errc::UnsupportedArch, "not ELF32: " + path_);
  if (b[5] != 1) fail(Errc::UnsupportedArch, "not little-endian: " + path_);
  if (b.size() < EHDR_SIZE) fail(Errc::TruncatedFile, path_);
  if (rd16(b, 18) != EM_ARM) fail(Errc::UnsupportedArch, "machine != ARM: " + path_);

  phoff_ = rd32(b, 28);
  shoff_ = rd32(b, 32);
  phnum_ = rd16(b, 44);
  shnum_ = rd16(b, 48);
  shstrndx_ = rd16(b, 50);
  uint32_t phentsize = rd16(b, 42);

  if (phnum_ && phentsize != PHDR_SIZE) fail(Errc::NotElf, "odd phentsize in " + path_);
  if (uint64_t(phoff_) + uint64_t(phnum_) * PHDR_SIZE > b.size())
    fail(Errc::TruncatedFile, "program headers beyond EOF in " + path_);

  for (uint32_t i = 0; i < phnum_; ++i) {
    uint32_t off = phoff_ + i * PHDR_SIZE;
    Segment s;
    uint32_t type = rd32(b, off);
    s.kind = type == PT_LOAD ? Segment::Kind::Load
                             : (type == PT_DYNAMIC ? Segment::Kind::Dynamic : Segment::Kind::Other);
    s.offset = rd32(b, off + 4);
    s.vaddr = rd32(b, off + 8);
    s.filesz = rd32(b, off + 16);
    s.memsz = rd32(b, off + 20);
    s.flags = rd32(b, off + 24);
    s.phdr_index = i;
    if (uint64_t(s.offset) + s.filesz > b.size())
      fail(Errc::TruncatedFile, "segment data beyond EOF in " + path_);
    if (s.memsz < s.filesz) fail(Errc::NotElf, "memsz < filesz in " + path_);
    segments_.push_back(s);
  }

  parse_sections();
  parse_symbols();
  parse_got_plt();
}

void BinaryImage::parse_sections() {
  const auto& b = bytes_;
  if (!shoff_ || !shnum_) return;
  if (uint64_t(shoff_) + uint64_t(shnum_) * SHDR_SIZE > b.size())
    fail(Errc::TruncatedFile, "section headers beyond EOF in " + path_);
  std::vector<Section> secs;
  for (uint32_t i = 0; i < shnum_; ++i) {
    uint32_t off = shoff_ + i * SHDR_SIZE;
    Section s;
    s.name = std::to_string(rd32(b, off));  // temporarily the name index
    s.type = rd32(b, off + 4);
    s.flags = rd32(b, off + 8);
    s.addr = rd32(b, off + 12);
    s.offset = rd32(b, off + 16);
    s.size = rd32(b, off + 20);
    s.link = rd32(b, off + 24);
    s.entsize = rd32(b, off + 36);
    secs.push_back(s);
  }
  if (shstrndx_ < secs.size()) {
    const Section& strtab = secs[shstrndx_];
    for (auto& s : secs) {
      uint32_t idx = uint32_t(std::stoul(s.name));
      if (strtab.offset + idx < b.size()) {
        const char* p = reinterpret_cast<const char*>(b.data() + strtab.offset + idx);
        s.name.assign(p, strnlen(p, b.size() - strtab.offset - idx));
      } else {
        s.name.clear();
      }
    }
  }
  sections_ = std::move(secs);
}

void BinaryImage::parse_symbols() {
  const auto& b = bytes_;
  for (const auto& sec : sections_) {
    if (sec.type != SHT_SYMTAB && sec.type != SHT_DYNSYM) continue;
    if (sec.link >= sections_.size() || sections_[sec.link].type != SHT_STRTAB) continue;
    const Section& str = sections_[sec.link];
    uint32_t n = sec.entsize ? sec.size / sec.entsize : 0;
    for (uint32_t i = 1; i < n; ++i) {
      uint32_t off = sec.offset + i * sec.entsize;
      if (off + 16 > b.size()) break;
      uint32_t nameidx = rd32(b, off);
      uint32_t value = rd32(b, off + 4);
      uint8_t info = b[off + 12];
      if (str.offset + nameidx >= b.size()) continue;
      const char* p = reinterpret_cast<const char*>(b.data() + str.offset + nameidx);
      std::string name(p, strnlen(p, b.size() - str.offset - nameidx));
      if (name.empty()) continue;
      if (name[0] == '$') {  // ARM mapping symbols
        if (name == "$t" || name.starts_with("$t."))
          mode_hints_[value] = isa::Mode::Thumb;
        else if (name == "$a" || name.starts_with("$a."))
          mode_hints_[value] = isa::Mode::Arm;
        continue;
      }
      uint8_t type = info & 0xf;
      SymInfo si;
      si.kind = type == 2 ? SymInfo::Kind::Func
                          : (type == 1 ? SymInfo::Kind::Object : SymInfo::Kind::Other);
      if (si.kind == SymInfo::Kind::Func && (value & 1)) {
        mode_hints_[value & ~1u] = isa::Mode::Thumb;
        value &= ~1u;
      }
      si.vaddr = value;
      symbols_[name] = si;
    }
  }
}

void BinaryImage::parse_got_plt() {
  // Recover GOT slot names from .rel.plt / .rel.dyn against .dynsym.
  const Section* dynsym = nullptr;
  for (const auto& s : sections_)
    if (s.type == SHT_DYNSYM) dynsym = &s;
  if (!dynsym || dynsym->link >= sections_.size()) return;
  const Section& dynstr = sections_[dynsym->link];
  const auto& b = bytes_;
  auto sym_name = [&](uint32_t idx) -> std::string {
    uint32_t off = dynsym->offset + idx * dynsym->entsize;
    if (!dynsym->entsize || off + 16 > b.size()) return {};
    uint32_t nameidx = rd32(b, off);
    if (dynstr.offset + nameidx >= b.size()) return {};
    const char* p = reinterpret_cast<const char*>(b.data() + dynstr.offset + nameidx);
    return std::string(p, strnlen(p, b.size() - dynstr.offset - nameidx));
  };

  const Section* relplt = nullptr;
  for (const auto& s : sections_) {
    if (s.type != SHT_REL) continue;
    uint32_t n = s.entsize ? s.size / s.entsize : 0;
    for (uint32_t i = 0; i < n; ++i) {
      uint32_t off = s.offset + i * s.entsize;
      if (off + 8 > b.size()) break;
      uint32_t r_offset = rd32(b, off);
      uint32_t r_info = rd32(b, off + 4);
      std::string name = sym_name(r_info >> 8);
      if (!name.empty()) got_entries_[r_offset] = name;
    }
    if (s.name == ".rel.plt") relplt = &s;
  }

  // Conventional ARM PLT layout: 20-byte header then 12-byte stubs in
  // .rel.plt order.
  if (relplt) {
    const Section* plt = nullptr;
    for (const auto& s : sections_)
      if (s.name == ".plt") plt = &s;
    if (plt && relplt->entsize) {
      uint32_t n = relplt->size / relplt->entsize;
      if (20 + 12 * uint64_t(n) <= plt->size) {
        for (uint32_t i = 0; i < n; ++i) {
          uint32_t off = relplt->offset + i * relplt->entsize;
          std::string name = sym_name(rd32(bytes_, off + 4) >> 8);
          if (!name.empty()) plt_stubs_[plt->addr + 20 + 12 * i] = name;
        }
      }
    }
  }
}

void BinaryImage::emit(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes_.data()), std::streamsize(bytes_.size()));
  if (!out) fail(Errc::IoError, "short write: " + path);
}

bool BinaryImage::is_mapped(uint32_t vaddr, uint32_t len) const {
  for (const auto& s : segments_) {
    if (s.kind != Segment::Kind::Load) continue;
    if (vaddr >= s.vaddr && uint64_t(vaddr) + len <= uint64_t(s.vaddr) + s.filesz) return true;
  }
  return false;
}

uint32_t BinaryImage::to_offset(uint32_t vaddr) const {
  for (const auto& s : segments_) {
    if (s.kind != Segment::Kind::Load) continue;
    if (s.contains_vaddr(vaddr)) return s.offset + (vaddr - s.vaddr);
  }
  fail(Errc::UnmappedAddress, hex(vaddr) + " in " + path_);
}

std::vector<uint8_t> BinaryImage::read(uint32_t vaddr, uint32_t len) const {
  if (!is_mapped(vaddr, len)) fail(Errc::UnmappedAddress, hex(vaddr));
  uint32_t off = to_offset(vaddr);
  return {bytes_.begin() + off, bytes_.begin() + off + len};
}

std::span<const uint8_t> BinaryImage::view(uint32_t vaddr, uint32_t max_len) const {
  uint32_t off = to_offset(vaddr);
  for (const auto& s : segments_) {
    if (s.kind == Segment::Kind::Load && s.contains_vaddr(vaddr)) {
      uint32_t avail = s.filesz - (vaddr - s.vaddr);
      return {bytes_.data() + off, std::min(avail, max_len)};
    }
  }
  fail(Errc::UnmappedAddress, hex(vaddr));
}

uint32_t BinaryImage::read_u32(uint32_t vaddr) const {
  auto v = read(vaddr, 4);
  return uint32_t(v[0]) | (uint32_t(v[1]) << 8) | (uint32_t(v[2]) << 16) | (uint32_t(v[3]) << 24);
}

void BinaryImage::allow_edits(uint32_t vaddr, uint32_t len) { editable_.push_back({vaddr, len}); }

void BinaryImage::write(uint32_t vaddr, std::span<const uint8_t> data) {
  if (!is_mapped(vaddr, uint32_t(data.size())))
    fail(Errc::UnmappedAddress, "write at " + hex(vaddr));
  bool ok = false;
  for (auto [ev, el] : editable_)
    if (vaddr >= ev && uint64_t(vaddr) + data.size() <= uint64_t(ev) + el) ok = true;
  if (!ok) fail(Errc::OutsideEditableRange, "write at " + hex(vaddr));
  uint32_t off = to_offset(vaddr);
  std::copy(data.begin(), data.end(), bytes_.begin() + off);
}

void BinaryImage::patch_u32_at_offset(uint32_t off, uint32_t value) { wr32(bytes_, off, value); }

PatchRegion BinaryImage::alloc_patch_region(uint32_t min_size) {
  if (min_size == 0) fail(Errc::LayoutConflict, "min_size must be positive");
  uint32_t size = align_up(min_size, 4);

  Segment* exec = nullptr;
  for (auto& s : segments_)
    if (s.kind == Segment::Kind::Load && s.executable() && (!exec || s.vaddr < exec->vaddr))
      exec = &s;
  if (!exec) fail(Errc::LayoutConflict, "no executable load segment in " + path_);

  // Try extending the executable segment in place. The region begins right
  // after its current file content; this only works when nothing but the
  // (relocatable) section header table lives past that point.
  uint32_t tail_off = align_up(exec->offset + exec->filesz, 4);
  uint32_t region_vaddr = exec->vaddr + (tail_off - exec->offset);
  bool vaddr_free = true;
  for (const auto& s : segments_) {
    if (s.phdr_index == exec->phdr_index || s.kind != Segment::Kind::Load) continue;
    uint64_t lo = s.vaddr, hi = uint64_t(s.vaddr) + s.memsz;
    if (region_vaddr < hi && uint64_t(region_vaddr) + size > lo) vaddr_free = false;
  }
  bool tail_free = tail_off >= bytes_.size();
  bool tail_is_shdrs = shoff_ == tail_off &&
                       uint64_t(shoff_) + uint64_t(shnum_) * SHDR_SIZE == bytes_.size();
  if (vaddr_free && (tail_free || tail_is_shdrs)) {
    std::vector<uint8_t> shdrs;
    if (!tail_free) {
      shdrs.assign(bytes_.begin() + shoff_, bytes_.end());
      bytes_.resize(shoff_);
      if (bytes_.size() < tail_off) bytes_.resize(tail_off, 0);
    }
    bytes_.resize(size_t(tail_off) + size, 0);
    if (!shdrs.empty()) {
      shoff_ = uint32_t(bytes_.size());
      bytes_.insert(bytes_.end(), shdrs.begin(), shdrs.end());
      wr32(bytes_, 32, shoff_);
    }
    uint32_t new_filesz = tail_off + size - exec->offset;
    exec->filesz = new_filesz;
    exec->memsz = std::max(exec->memsz, new_filesz);
    uint32_t ph = phoff_ + uint32_t(exec->phdr_index) * PHDR_SIZE;
    wr32(bytes_, ph + 16, exec->filesz);
    wr32(bytes_, ph + 20, exec->memsz);
    PatchRegion r{region_vaddr, size, 0, size};
    allow_edits(region_vaddr, size);
    return r;
  }

  // Fall back to appending a fresh PT_LOAD (the `.patch` segment). The
  // program header table moves to the end of the file if it cannot grow in
  // place; existing segments keep their offsets and vaddrs.
  uint64_t max_end = 0;
  for (const auto& s : segments_)
    if (s.kind == Segment::Kind::Load)
      max_end = std::max(max_end, uint64_t(s.vaddr) + s.memsz);
  uint32_t new_vaddr = uint32_t(align_up(uint32_t(max_end), 0x1000));
  uint32_t file_off = align_up(uint32_t(bytes_.size()), 0x1000);
  // p_offset and p_vaddr must be congruent modulo the page size
  file_off += (new_vaddr - file_off) & 0xfff;
  bytes_.resize(file_off, 0);
  bytes_.resize(size_t(file_off) + size, 0);

  std::vector<uint8_t> phdrs(bytes_.begin() + phoff_, bytes_.begin() + phoff_ + phnum_ * PHDR_SIZE);
  phdrs.resize(phdrs.size() + PHDR_SIZE, 0);
  wr32(phdrs, phnum_ * PHDR_SIZE + 0, PT_LOAD);
  wr32(phdrs, phnum_ * PHDR_SIZE + 4, file_off);
  wr32(phdrs, phnum_ * PHDR_SIZE + 8, new_vaddr);
  wr32(phdrs, phnum_ * PHDR_SIZE + 12, new_vaddr);
  wr32(phdrs, phnum_ * PHDR_SIZE + 16, size);
  wr32(phdrs, phnum_ * PHDR_SIZE + 20, size);
  wr32(phdrs, phnum_ * PHDR_SIZE + 24, 0x7);  // rwx
  wr32(phdrs, phnum_ * PHDR_SIZE + 28, 0x1000);

  uint32_t new_phoff = uint32_t(bytes_.size());
  bytes_.insert(bytes_.end(), phdrs.begin(), phdrs.end());
  wr32(bytes_, 28, new_phoff);
  wr16(bytes_, 44, uint16_t(phnum_ + 1));

  Segment seg;
  seg.kind = Segment::Kind::Load;
  seg.offset = file_off;
  seg.vaddr = new_vaddr;
  seg.filesz = seg.memsz = size;
  seg.flags = 0x7;
  seg.phdr_index = phnum_;
  phoff_ = new_phoff;
  phnum_ += 1;
  segments_.push_back(seg);

  PatchRegion r{new_vaddr, size, 0, size};
  allow_edits(new_vaddr, size);
  return r;
}

std::optional<uint32_t> BinaryImage::symbol_addr(const std::string& name) const {
  auto it = symbols_.find(name);
  if (it == symbols_.end()) return std::nullopt;
  return it->second.vaddr;
}

std::optional<std::string> BinaryImage::symbol_at(uint32_t vaddr) const {
  for (const auto& [name, si] : symbols_)
    if (si.vaddr == vaddr) return name;
  return std::nullopt;
}

std::optional<isa::Mode> BinaryImage::mode_hint(uint32_t vaddr) const {
  auto it = mode_hints_.find(vaddr);
  if (it == mode_hints_.end()) return std::nullopt;
  return it->second;
}

}  // namespace mend::elf
