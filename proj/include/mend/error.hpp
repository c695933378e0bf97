#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mend {

enum class Errc {
  // elf
  NotElf,
  UnsupportedArch,
  TruncatedFile,
  LayoutConflict,
  UnmappedAddress,
  OutsideEditableRange,
  IoError,
  // codec
  UnknownEncoding,
  Misaligned,
  OutOfRange,
  NotEncodable,
  // flow
  DecodeFailure,
  IndirectUnresolved,
  // matcher
  FunctionNotFound,
  // slice/solver
  SliceEscapes,
  NonAffine,
  Underdetermined,
  Inconsistent,
  // reassembler
  RegionOverflow,
  RegionTooSmall,
  CapExceeded,
  // interpreter
  FuelExhausted,
  UndefinedInstruction,
  UnmappedAccess,
  // cli
  Usage,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc code, std::string msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, std::string msg) { throw Error(code, std::move(msg)); }

std::string hex(uint32_t v);

}  // namespace mend
