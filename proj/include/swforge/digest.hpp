#pragma once

#include <cstdint>
#include <string_view>

#include "swforge/bytes.hpp"

namespace swforge {

inline constexpr std::size_t kMd5Size = 16;

Bytes md5(ByteView data);

/// CHAP-style digest MD5(id || secret || challenge), shared by L2TP tunnel
/// authentication (id = message type of the carrying message) and PPP CHAP.
Bytes chap_md5(std::uint8_t id, std::string_view secret, ByteView challenge);

}  // namespace swforge
