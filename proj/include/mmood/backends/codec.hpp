#pragma once

#include "mmood/embedding.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace mmood::backends {

using Digest = std::array<std::uint8_t, 32>;

[[nodiscard]] Digest sha256(std::string_view bytes);
[[nodiscard]] std::string to_hex(Digest const& d);

[[nodiscard]] std::string base64_encode(std::string_view bytes);
/// Throws MalformedResponse on invalid input.
[[nodiscard]] std::string base64_decode(std::string_view text);

/// Binary embedding record: "OODEMB1\n", u32 LE dim, dim f32 LE values.
[[nodiscard]] std::string encode_embedding(Embedding const& e);
/// Throws CacheCorrupt on a bad magic, truncated body or non-finite value.
[[nodiscard]] Embedding decode_embedding(std::string_view bytes);

/// Rounds every component through float32 so a value survives the binary
/// record unchanged.
[[nodiscard]] Embedding quantize_f32(Embedding const& e);

/// Counter-mode stream of uniform doubles in (0, 1) keyed by SHA-256 of
/// (key, seed, block counter).
class HashStream {
public:
    HashStream(std::string_view key, std::uint64_t seed);

    [[nodiscard]] std::uint64_t next_u64();
    [[nodiscard]] double next_uniform();
    /// Box-Muller from two uniforms.
    [[nodiscard]] double next_normal();

private:
    void refill();

    Digest key_digest_;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    Digest block_{};
    std::size_t offset_ = sizeof(Digest);
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Unit vector from `dim` standard normals drawn from a HashStream.
[[nodiscard]] Embedding hash_to_sphere(std::string_view key, std::uint64_t seed, std::size_t dim);

} // namespace mmood::backends
