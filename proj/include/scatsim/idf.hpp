// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "scatsim/geometry.hpp"
#include "scatsim/rng.hpp"

namespace scatsim {

struct IdfKey {
  std::array<uint8_t, 16> bytes{};

  static IdfKey from_rng(Rng& rng) {
    IdfKey k;
    for (int i = 0; i < 2; i++) {
      uint64_t w = rng.next_u64();
      std::memcpy(k.bytes.data() + 8 * i, &w, 8);
    }
    return k;
  }

  static IdfKey from_words(uint64_t lo, uint64_t hi) {
    IdfKey k;
    std::memcpy(k.bytes.data(), &lo, 8);
    std::memcpy(k.bytes.data() + 8, &hi, 8);
    return k;
  }

  bool operator==(const IdfKey&) const = default;
};

// Keyed index derivation: (sdid, addr) -> one index per way.
//
// The keystream for a line is AES-128(key, sdid || addr), extended by
// re-encrypting the previous block when the geometry needs more than 128
// bits; b_indices bits are sliced off per way. The mapping is treated as a
// black-box PRF everywhere else in the simulator.
class Idf {
 public:
  Idf(CacheGeometry geom, IdfKey key) : geom_(geom), key_(key) {
    geom_.validate();
    ctx_ = EVP_CIPHER_CTX_new();
    if (!ctx_) throw std::runtime_error("idf: EVP_CIPHER_CTX_new failed");
    if (EVP_EncryptInit_ex(ctx_, EVP_aes_128_ecb(), nullptr, key_.bytes.data(),
                           nullptr) != 1)
      throw std::runtime_error("idf: AES-128 init failed");
    EVP_CIPHER_CTX_set_padding(ctx_, 0);
  }

  ~Idf() {
    if (ctx_) EVP_CIPHER_CTX_free(ctx_);
  }

  Idf(const Idf& other) : Idf(other.geom_, other.key_) {}
  Idf& operator=(const Idf& other) {
    if (this != &other) {
      Idf tmp(other);
      std::swap(geom_, tmp.geom_);
      std::swap(key_, tmp.key_);
      std::swap(ctx_, tmp.ctx_);
    }
    return *this;
  }
  Idf(Idf&& other) noexcept
      : geom_(other.geom_), key_(other.key_), ctx_(other.ctx_) {
    other.ctx_ = nullptr;
  }
  Idf& operator=(Idf&& other) noexcept {
    std::swap(geom_, other.geom_);
    std::swap(key_, other.key_);
    std::swap(ctx_, other.ctx_);
    return *this;
  }

  const CacheGeometry& geometry() const { return geom_; }
  const IdfKey& key() const { return key_; }

  // Writes n_ways indices, each in [0, 2^b_indices).
  void indices(SecurityDomainId sdid, LineAddress addr, uint16_t* out) const {
    uint8_t block[16];
    std::memcpy(block, &sdid.value, 8);
    std::memcpy(block + 8, &addr.value, 8);
    encrypt_block(block);

    const uint32_t bits_per = geom_.b_indices;
    const uint32_t mask = geom_.indices_per_way() - 1;
    uint64_t bitbuf = 0;
    uint32_t nbits = 0;
    uint32_t byte_pos = 0;
    for (uint32_t w = 0; w < geom_.n_ways; w++) {
      while (nbits < bits_per) {
        if (byte_pos == 16) {
          encrypt_block(block);  // extend keystream
          byte_pos = 0;
        }
        bitbuf |= static_cast<uint64_t>(block[byte_pos++]) << nbits;
        nbits += 8;
      }
      out[w] = static_cast<uint16_t>(bitbuf & mask);
      bitbuf >>= bits_per;
      nbits -= bits_per;
    }
  }

  std::vector<uint16_t> indices(SecurityDomainId sdid, LineAddress addr) const {
    std::vector<uint16_t> v(geom_.n_ways);
    indices(sdid, addr, v.data());
    return v;
  }

 private:
  void encrypt_block(uint8_t block[16]) const {
    int outl = 0;
    if (EVP_EncryptUpdate(ctx_, block, &outl, block, 16) != 1 || outl != 16)
      throw std::runtime_error("idf: AES-128 encrypt failed");
  }

  CacheGeometry geom_;
  IdfKey key_;
  EVP_CIPHER_CTX* ctx_ = nullptr;  // reused across calls; not thread-safe
};

}  // namespace scatsim
