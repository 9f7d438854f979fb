#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace meshfield {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

}  // namespace meshfield
