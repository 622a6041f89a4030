#pragma once

namespace wigner {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportSchema = "wigner-lab/1";

}  // namespace wigner
