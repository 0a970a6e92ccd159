#pragma once

namespace evmst {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kFormatVersions = "fseq=1 mems=1 vitw=1";

}  // namespace evmst
