#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swforge {

enum class Errc {
  // wire codec
  Truncated,
  BadVersion,
  InvalidHeader,
  HiddenAvpRejected,
  MandatoryUnknownAvp,
  UnknownMessageType,
  MalformedMessage,
  ValueTooLong,
  UnknownProtocol,
  // tunnel engine
  ProtocolViolation,
  AuthFailure,
  PacketTooBig,
  SessionNotUp,
  WrongAddressFamily,
  // ppp engine
  MtuTooSmall,
  NegotiationDiverged,
  AuthFailed,
  IidExhausted,
  PoolExhausted,
  InvalidConfig,
  // provisioning
  NoPrefixAvailable,
  DadFailed,
  DuidMismatch,
  UnsupportedLength,
  LengthOutOfRange,
  Conflict,
  // aaa
  InconsistentAttributes,
  // cli
  MissingTrace,
  ParseError,
  LinkDead,
  PeerTerminated,
  Timeout,
};

std::string_view to_string(Errc code) noexcept;

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  explicit Error(Errc code) : std::runtime_error(std::string(to_string(code))), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace swforge
