#include "synthpipe/hashing.hpp"

#include <openssl/sha.h>

namespace synthpipe {

namespace {

std::array<std::uint8_t, SHA256_DIGEST_LENGTH> sha256(std::string_view data) {
    std::array<std::uint8_t, SHA256_DIGEST_LENGTH> out{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
    return out;
}

std::uint64_t load_le64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

Digest128 digest128(std::string_view data) {
    const auto full = sha256(data);
    Digest128 out{};
    std::copy_n(full.begin(), out.size(), out.begin());
    return out;
}

std::string digest128_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    const Digest128 d = digest128(data);
    std::string out;
    out.reserve(32);
    for (std::uint8_t b : d) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

std::uint64_t keyed_hash64(std::uint64_t key, std::string_view data) {
    std::string buf;
    buf.reserve(8 + data.size());
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((key >> (8 * i)) & 0xFF));
    buf.append(data);
    const auto full = sha256(buf);
    return load_le64(full.data());
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    return keyed_hash64(seed, label);
}

}  // namespace synthpipe
