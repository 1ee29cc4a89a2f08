#include "swforge/error.hpp"

#include <cctype>

#include "swforge/bytes.hpp"

namespace swforge {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::Truncated: return "Truncated";
    case Errc::BadVersion: return "BadVersion";
    case Errc::InvalidHeader: return "InvalidHeader";
    case Errc::HiddenAvpRejected: return "HiddenAvpRejected";
    case Errc::MandatoryUnknownAvp: return "MandatoryUnknownAvp";
    case Errc::UnknownMessageType: return "UnknownMessageType";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::ValueTooLong: return "ValueTooLong";
    case Errc::UnknownProtocol: return "UnknownProtocol";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::AuthFailure: return "AuthFailure";
    case Errc::PacketTooBig: return "PacketTooBig";
    case Errc::SessionNotUp: return "SessionNotUp";
    case Errc::WrongAddressFamily: return "WrongAddressFamily";
    case Errc::MtuTooSmall: return "MtuTooSmall";
    case Errc::NegotiationDiverged: return "NegotiationDiverged";
    case Errc::AuthFailed: return "AuthFailed";
    case Errc::IidExhausted: return "IidExhausted";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NoPrefixAvailable: return "NoPrefixAvailable";
    case Errc::DadFailed: return "DadFailed";
    case Errc::DuidMismatch: return "DuidMismatch";
    case Errc::UnsupportedLength: return "UnsupportedLength";
    case Errc::LengthOutOfRange: return "LengthOutOfRange";
    case Errc::Conflict: return "Conflict";
    case Errc::InconsistentAttributes: return "InconsistentAttributes";
    case Errc::MissingTrace: return "MissingTrace";
    case Errc::ParseError: return "ParseError";
    case Errc::LinkDead: return "LinkDead";
    case Errc::PeerTerminated: return "PeerTerminated";
    case Errc::Timeout: return "Timeout";
  }
  return "Unknown";
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view text) {
  Bytes out;
  int pending = -1;
  bool comment = false;
  for (char c : text) {
    if (comment) {
      if (c == '\n') comment = false;
      continue;
    }
    if (c == '#') {
      comment = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw Error(Errc::ParseError, std::string("bad hex digit '") + c + "'");
    if (pending < 0) {
      pending = v;
    } else {
      out.push_back(static_cast<std::uint8_t>((pending << 4) | v));
      pending = -1;
    }
  }
  if (pending >= 0) throw Error(Errc::ParseError, "odd number of hex digits");
  return out;
}

}  // namespace swforge
