#pragma once

#include <cstdint>
#include <string>

namespace marvel {

// FNV-1a 64-bit content hash; used to fingerprint input files in run logs.
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t hash_file(const std::string& path);
std::string hash_hex(uint64_t h);

}  // namespace marvel
