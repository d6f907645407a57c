#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace confcal {

/// SHA-256 of `data`, as 64 lowercase hex characters.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's bytes. Throws IoError if the file cannot be read.
std::string sha256_file(const std::string& path);

/// First 64 bits of sha256_hex(data), useful for seeding RNGs from content.
std::uint64_t digest_seed(std::string_view data);

} // namespace confcal
