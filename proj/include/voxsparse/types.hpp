#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voxsparse {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

// Default grid extent per axis; large indoor/outdoor scans quantize into
// grids up to 4096 cells per dimension.
inline constexpr u32 kDefaultGridExtent = 4096;

inline u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

// Shared failure type for data/contract errors. The CLI maps these to a
// nonzero exit with the failing stage name.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace voxsparse
