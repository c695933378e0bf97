#include "mend/fixture.hpp"

#include <cstring>

#include "mend/error.hpp"

namespace mend::fixture {

using isa::Cond;
using isa::InstrSpec;
using isa::Mnemonic;
using isa::Operand;

int Asm::label() { return next_label_++; }

void Asm::bind(int l) { binds_[l] = items_.size(); }

void Asm::ins(InstrSpec spec, uint8_t min_w) {
  items_.push_back({std::move(spec), min_w, -1, -1, 0, uint8_t(min_w ? min_w : 2)});
}

void Asm::b(Cond c, int l, uint8_t min_w) {
  InstrSpec s;
  s.mnemonic = Mnemonic::B;
  s.cond = c;
  s.operands = {Operand::target(0)};
  items_.push_back({std::move(s), min_w, l, -1, 0, uint8_t(min_w ? min_w : 2)});
}

void Asm::bl(uint32_t abs_target) {
  InstrSpec s;
  s.mnemonic = Mnemonic::Bl;
  s.operands = {Operand::target(abs_target)};
  items_.push_back({std::move(s), 4, -1, -1, 0, 4});
}

int Asm::lit(uint32_t value) {
  literals_.push_back(value);
  return int(literals_.size()) - 1;
}

void Asm::set_lit(int lit_id, uint32_t value) { literals_.at(lit_id) = value; }

void Asm::ldr_lit(uint8_t rd, int lit_id) {
  InstrSpec s;
  s.mnemonic = Mnemonic::Ldr;
  s.operands = {Operand::reg(rd), Operand::literal(0)};
  items_.push_back({std::move(s), 0, -1, lit_id, 0, 2});
}

std::vector<uint8_t> Asm::assemble(uint32_t at) {
  start_ = at;
  bool changed = true;
  int rounds = 0;
  while (changed) {
    if (++rounds > 8 + int(items_.size()) * 2)
      fail(Errc::OutOfRange, "fixture assembly did not settle");
    changed = false;
    uint32_t cursor = at;
    for (auto& it : items_) {
      if (it.addr != cursor) changed = true;
      it.addr = cursor;
      cursor += it.width;
    }
    pool_at_ = (cursor + 3) & ~3u;
    lit_addrs_.resize(literals_.size());
    for (size_t i = 0; i < literals_.size(); ++i) lit_addrs_[i] = pool_at_ + 4 * uint32_t(i);

    for (auto& it : items_) {
      InstrSpec spec = it.spec;
      if (it.target_label >= 0) {
        auto bi = binds_.find(it.target_label);
        if (bi == binds_.end()) fail(Errc::OutOfRange, "unbound fixture label");
        uint32_t t = bi->second < items_.size() ? items_[bi->second].addr : pool_at_;
        for (auto& o : spec.operands)
          if (o.kind == Operand::Kind::PcRelTarget) o.value = t;
      }
      if (it.lit_id >= 0)
        for (auto& o : spec.operands)
          if (o.kind == Operand::Kind::PcRelLoad) o.value = lit_addrs_[it.lit_id];
      uint8_t w;
      try {
        w = isa::encode(spec, it.addr, mode_, it.min_w).width;
      } catch (const Error& e) {
        if ((e.code() == Errc::OutOfRange || e.code() == Errc::NotEncodable) &&
            it.min_w < 4) {
          it.min_w = 4;
          w = 4;
        } else {
          throw;
        }
      }
      if (w > it.min_w && it.min_w != 0) it.min_w = w;
      if (it.width != w) {
        it.width = w;
        changed = true;
      }
    }
  }

  std::vector<uint8_t> out;
  for (auto& it : items_) {
    InstrSpec spec = it.spec;
    if (it.target_label >= 0) {
      size_t bi = binds_.at(it.target_label);
      uint32_t t = bi < items_.size() ? items_[bi].addr : pool_at_;
      for (auto& o : spec.operands)
        if (o.kind == Operand::Kind::PcRelTarget) o.value = t;
    }
    if (it.lit_id >= 0)
      for (auto& o : spec.operands)
        if (o.kind == Operand::Kind::PcRelLoad) o.value = lit_addrs_[it.lit_id];
    isa::Instr enc = isa::encode(spec, it.addr, mode_, it.min_w);
    out.insert(out.end(), enc.raw.begin(), enc.raw.begin() + enc.width);
  }
  while ((at + out.size()) % 4) out.push_back(0);
  for (uint32_t v : literals_) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
  }
  end_ = at + uint32_t(out.size());
  laid_out_ = true;
  return out;
}

uint32_t Asm::label_addr(int l) const {
  size_t bi = binds_.at(l);
  return bi < items_.size() ? items_[bi].addr : pool_at_;
}

uint32_t Asm::lit_addr(int lit_id) const { return lit_addrs_.at(lit_id); }

uint32_t Asm::item_addr(size_t index) const { return items_.at(index).addr; }

std::vector<Asm::Fact> Asm::facts() const {
  std::vector<Fact> out;
  for (const auto& it : items_) {
    Fact f;
    f.addr = it.addr;
    f.width = it.width;
    Mnemonic m = it.spec.mnemonic;
    f.is_call = m == Mnemonic::Bl || m == Mnemonic::Blx;
    f.is_branch = m == Mnemonic::B;
    f.conditional = f.is_branch && it.spec.cond != Cond::Al;
    bool pop_pc = m == Mnemonic::Pop && ((it.spec.operands.at(0).value >> isa::PC) & 1);
    f.is_terminator = (f.is_branch && !f.conditional) || m == Mnemonic::Bx || pop_pc ||
                      m == Mnemonic::Udf;
    if (f.is_branch && it.target_label >= 0) f.target = label_addr(it.target_label);
    if (f.is_call)
      for (const auto& o : it.spec.operands)
        if (o.kind == Operand::Kind::PcRelTarget) f.target = o.value;
    out.push_back(f);
  }
  return out;
}

namespace {

void w16(std::vector<uint8_t>& b, size_t off, uint16_t v) {
  b[off] = uint8_t(v);
  b[off + 1] = uint8_t(v >> 8);
}
void w32(std::vector<uint8_t>& b, size_t off, uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = uint8_t(v >> (8 * i));
}
void push32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}

}  // namespace

ElfBuilder::ElfBuilder(uint32_t base_vaddr) : base_(base_vaddr) {}

void ElfBuilder::align(uint32_t a, uint8_t fill) {
  while (content_.size() % a) content_.push_back(fill);
}

uint32_t ElfBuilder::bytes(const std::vector<uint8_t>& data) {
  uint32_t at = here();
  content_.insert(content_.end(), data.begin(), data.end());
  return at;
}

uint32_t ElfBuilder::cstr(const std::string& s) {
  uint32_t at = here();
  content_.insert(content_.end(), s.begin(), s.end());
  content_.push_back(0);
  content_.push_back(0);  // guarantees a double-NUL terminator
  return at;
}

uint32_t ElfBuilder::word(uint32_t v) {
  align(4);
  uint32_t at = here();
  push32(content_, v);
  return at;
}

void ElfBuilder::begin_section(const std::string& name) {
  if (!secs_.empty()) secs_.back().end = here();
  secs_.push_back({name, here(), here()});
}

void ElfBuilder::func_symbol(const std::string& name, uint32_t addr) {
  funcs_.push_back({name, addr});
}

void ElfBuilder::obj_symbol(const std::string& name, uint32_t addr) {
  objs_.push_back({name, addr});
}

void ElfBuilder::thumb_at(uint32_t addr) { thumb_marks_.push_back(addr); }

void ElfBuilder::add_externals(const std::vector<std::string>& names) {
  externals_ = names;
  align(4);
  begin_section(".plt");
  plt_vaddr_ = here();
  // Header and one stub per name; the bytes are never executed (the
  // interpreter dispatches stub addresses to host functions).
  std::vector<uint8_t> body(20 + 12 * names.size(), 0);
  for (size_t i = 0; i < body.size(); i += 2) {
    body[i] = 0x00;
    body[i + 1] = 0xbf;  // thumb nop, keeps disassembly harmless
  }
  bytes(body);
}

uint32_t ElfBuilder::plt_addr(const std::string& name) const {
  for (size_t i = 0; i < externals_.size(); ++i)
    if (externals_[i] == name) return plt_vaddr_ + 20 + 12 * uint32_t(i);
  fail(Errc::FunctionNotFound, "no external stub " + name);
}

std::vector<uint8_t> ElfBuilder::build(bool strip_func_symbols) const {
  constexpr uint32_t EHDR = 52, PHDR = 32, SHDR = 40;
  constexpr uint32_t content_off = 0x100;

  std::vector<Sec> secs = secs_;
  if (!secs.empty()) secs.back().end = base_ + uint32_t(content_.size());

  std::vector<uint8_t> f(content_off, 0);
  f.insert(f.end(), content_.begin(), content_.end());

  // String/symbol tables live after the mapped content.
  auto make_strtab = [](const std::vector<std::string>& names, std::vector<uint32_t>& idx) {
    std::vector<uint8_t> t{0};
    for (const auto& n : names) {
      idx.push_back(uint32_t(t.size()));
      t.insert(t.end(), n.begin(), n.end());
      t.push_back(0);
    }
    return t;
  };

  // .dynstr / .dynsym / .rel.plt
  std::vector<uint32_t> dyn_idx;
  std::vector<uint8_t> dynstr = make_strtab(externals_, dyn_idx);
  std::vector<uint8_t> dynsym(16, 0);  // null symbol
  for (size_t i = 0; i < externals_.size(); ++i) {
    size_t off = dynsym.size();
    dynsym.resize(off + 16, 0);
    w32(dynsym, off, dyn_idx[i]);
    dynsym[off + 12] = 0x12;  // GLOBAL FUNC
  }
  std::vector<uint8_t> relplt;
  for (size_t i = 0; i < externals_.size(); ++i) {
    push32(relplt, 0);                               // r_offset (no real GOT)
    push32(relplt, (uint32_t(i + 1) << 8) | 0x16);  // R_ARM_JUMP_SLOT
  }

  // .strtab / .symtab
  std::vector<std::string> names;
  std::vector<std::pair<uint32_t, uint8_t>> vals;  // value, info
  for (const auto& a : thumb_marks_) {
    names.push_back("$t");
    vals.push_back({a, 0});
  }
  if (!strip_func_symbols)
    for (const auto& [n, a] : funcs_) {
      names.push_back(n);
      vals.push_back({a | 1u, 0x12});
    }
  for (const auto& [n, a] : objs_) {
    names.push_back(n);
    vals.push_back({a, 0x11});
  }
  std::vector<uint32_t> sym_idx;
  std::vector<uint8_t> strtab = make_strtab(names, sym_idx);
  std::vector<uint8_t> symtab(16, 0);
  for (size_t i = 0; i < names.size(); ++i) {
    size_t off = symtab.size();
    symtab.resize(off + 16, 0);
    w32(symtab, off, sym_idx[i]);
    w32(symtab, off + 4, vals[i].first);
    symtab[off + 12] = vals[i].second;
  }

  struct OutSec {
    std::string name;
    uint32_t type, flags, addr, offset, size, link, entsize;
  };
  std::vector<OutSec> out_secs;
  out_secs.push_back({"", 0, 0, 0, 0, 0, 0, 0});
  for (const auto& s : secs) {
    uint32_t off = content_off + (s.start - base_);
    out_secs.push_back({s.name, 1, 0x6, s.start, off, s.end - s.start, 0, 0});
  }

  auto append_blob = [&](const std::vector<uint8_t>& blob) {
    while (f.size() % 4) f.push_back(0);
    uint32_t off = uint32_t(f.size());
    f.insert(f.end(), blob.begin(), blob.end());
    return off;
  };

  uint32_t dynstr_off = append_blob(dynstr);
  uint32_t dynstr_ix = uint32_t(out_secs.size());
  out_secs.push_back({".dynstr", 3, 0, 0, dynstr_off, uint32_t(dynstr.size()), 0, 0});
  uint32_t dynsym_off = append_blob(dynsym);
  uint32_t dynsym_ix = uint32_t(out_secs.size());
  out_secs.push_back(
      {".dynsym", 11, 0, 0, dynsym_off, uint32_t(dynsym.size()), dynstr_ix, 16});
  if (!externals_.empty()) {
    uint32_t relplt_off = append_blob(relplt);
    out_secs.push_back(
        {".rel.plt", 9, 0, 0, relplt_off, uint32_t(relplt.size()), dynsym_ix, 8});
  }
  uint32_t strtab_off = append_blob(strtab);
  uint32_t strtab_ix = uint32_t(out_secs.size());
  out_secs.push_back({".strtab", 3, 0, 0, strtab_off, uint32_t(strtab.size()), 0, 0});
  uint32_t symtab_off = append_blob(symtab);
  out_secs.push_back(
      {".symtab", 2, 0, 0, symtab_off, uint32_t(symtab.size()), strtab_ix, 16});

  std::vector<uint8_t> shstr{0};
  std::vector<uint32_t> shname;
  for (const auto& s : out_secs) {
    shname.push_back(uint32_t(shstr.size()));
    shstr.insert(shstr.end(), s.name.begin(), s.name.end());
    shstr.push_back(0);
  }
  shname.push_back(uint32_t(shstr.size()));
  const char* shstrname = ".shstrtab";
  shstr.insert(shstr.end(), shstrname, shstrname + strlen(shstrname));
  shstr.push_back(0);
  uint32_t shstr_off = append_blob(shstr);
  out_secs.push_back({".shstrtab", 3, 0, 0, shstr_off, uint32_t(shstr.size()), 0, 0});

  while (f.size() % 4) f.push_back(0);
  uint32_t shoff = uint32_t(f.size());
  for (size_t i = 0; i < out_secs.size(); ++i) {
    size_t off = f.size();
    f.resize(off + SHDR, 0);
    const auto& s = out_secs[i];
    w32(f, off + 0, shname[i]);
    w32(f, off + 4, s.type);
    w32(f, off + 8, s.flags);
    w32(f, off + 12, s.addr);
    w32(f, off + 16, s.offset);
    w32(f, off + 20, s.size);
    w32(f, off + 24, s.link);
    w32(f, off + 36, s.entsize);
  }

  // ELF header.
  f[0] = 0x7f;
  f[1] = 'E';
  f[2] = 'L';
  f[3] = 'F';
  f[4] = 1;  // ELF32
  f[5] = 1;  // little endian
  f[6] = 1;
  w16(f, 16, 2);          // ET_EXEC
  w16(f, 18, 40);         // EM_ARM
  w32(f, 20, 1);          // version
  w32(f, 24, base_ | 1);  // entry (thumb)
  w32(f, 28, EHDR);       // phoff
  w32(f, 32, shoff);
  w32(f, 36, 0x05000000);  // EABI v5
  w16(f, 40, uint16_t(EHDR));
  w16(f, 42, uint16_t(PHDR));
  w16(f, 44, 1);  // phnum
  w16(f, 46, uint16_t(SHDR));
  w16(f, 48, uint16_t(out_secs.size()));
  w16(f, 50, uint16_t(out_secs.size() - 1));  // .shstrtab index

  // Single RX load segment over the content.
  w32(f, EHDR + 0, 1);  // PT_LOAD
  w32(f, EHDR + 4, content_off);
  w32(f, EHDR + 8, base_);
  w32(f, EHDR + 12, base_);
  w32(f, EHDR + 16, uint32_t(content_.size()));
  w32(f, EHDR + 20, uint32_t(content_.size()));
  w32(f, EHDR + 24, 0x5);  // R+X
  w32(f, EHDR + 28, 0x1000);
  return f;
}

}  // namespace mend::fixture
