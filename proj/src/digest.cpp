#include "swforge/digest.hpp"

#include <openssl/evp.h>

#include <memory>

namespace swforge {

Bytes md5(ByteView data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  Bytes out(kMd5Size);
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != kMd5Size) {
    throw std::runtime_error("MD5 digest failed");
  }
  return out;
}

Bytes chap_md5(std::uint8_t id, std::string_view secret, ByteView challenge) {
  Bytes input;
  input.reserve(1 + secret.size() + challenge.size());
  input.push_back(id);
  input.insert(input.end(), secret.begin(), secret.end());
  input.insert(input.end(), challenge.begin(), challenge.end());
  return md5(input);
}

}  // namespace swforge
