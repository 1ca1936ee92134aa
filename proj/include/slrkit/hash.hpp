#pragma once

#include <cstdint>
#include <string>

namespace slrkit {

/// SHA-256 over a byte buffer, returned as lowercase hex.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& data);

/// SHA-256 of a file's contents; throws IoError if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace slrkit
