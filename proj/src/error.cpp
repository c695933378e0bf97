#include "mend/error.hpp"

#include <cstdio>

namespace mend {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NotElf: return "NotElf";
    case Errc::UnsupportedArch: return "UnsupportedArch";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::LayoutConflict: return "LayoutConflict";
    case Errc::UnmappedAddress: return "UnmappedAddress";
    case Errc::OutsideEditableRange: return "OutsideEditableRange";
    case Errc::IoError: return "IoError";
    case Errc::UnknownEncoding: return "UnknownEncoding";
    case Errc::Misaligned: return "Misaligned";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::NotEncodable: return "NotEncodable";
    case Errc::DecodeFailure: return "DecodeFailure";
    case Errc::IndirectUnresolved: return "IndirectUnresolved";
    case Errc::FunctionNotFound: return "FunctionNotFound";
    case Errc::SliceEscapes: return "SliceEscapes";
    case Errc::NonAffine: return "NonAffine";
    case Errc::Underdetermined: return "Underdetermined";
    case Errc::Inconsistent: return "Inconsistent";
    case Errc::RegionOverflow: return "RegionOverflow";
    case Errc::RegionTooSmall: return "RegionTooSmall";
    case Errc::CapExceeded: return "CapExceeded";
    case Errc::FuelExhausted: return "FuelExhausted";
    case Errc::UndefinedInstruction: return "UndefinedInstruction";
    case Errc::UnmappedAccess: return "UnmappedAccess";
    case Errc::Usage: return "Usage";
  }
  return "Unknown";
}

std::string hex(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%x", v);
  return buf;
}

}  // namespace mend
