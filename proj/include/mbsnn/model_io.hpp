#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mbsnn/network.hpp"

namespace mbsnn {

// Binary model container:
//   magic "MBSN", format version u32, a network-spec JSON chunk, then one
//   record per parameter tensor (type tag u32, ndims u32, dims u32[],
//   little-endian float32 payload), and a trailing CRC32 of everything
//   before it. All integers little-endian regardless of host.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::uint32_t crc32_ieee(const void* data, std::size_t length, std::uint32_t seed = 0);

void save_model(const std::string& path, const Network& net);
Network load_model(const std::string& path);

}  // namespace mbsnn
