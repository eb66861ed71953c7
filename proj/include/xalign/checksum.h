#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace xalign {

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace xalign
