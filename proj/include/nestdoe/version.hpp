#pragma once

namespace nestdoe {

inline constexpr const char* version_string = "0.1.0";

#if defined(__clang__)
inline constexpr const char* compiler_string = "clang " __clang_version__;
#elif defined(__GNUC__)
inline constexpr const char* compiler_string = "gcc " __VERSION__;
#else
inline constexpr const char* compiler_string = "unknown compiler";
#endif

} // namespace nestdoe
