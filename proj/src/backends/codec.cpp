#include "mmood/backends/codec.hpp"

#include "mmood/error.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace mmood::backends {

namespace {

constexpr std::string_view kEmbeddingMagic = "OODEMB1\n";

void put_u32_le(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32_le(std::string_view in)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

} // namespace

Digest sha256(std::string_view bytes)
{
    Digest d{};
    SHA256(reinterpret_cast<unsigned char const*>(bytes.data()), bytes.size(), d.data());
    return d;
}

std::string to_hex(Digest const& d)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(d.size() * 2);
    for (auto b : d) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::string base64_encode(std::string_view bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int const n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<unsigned char const*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text)
{
    std::string clean;
    clean.reserve(text.size());
    for (char c : text) {
        if (c != '\n' && c != '\r' && c != ' ') {
            clean.push_back(c);
        }
    }
    if (clean.size() % 4 == 1) {
        throw Error(Errc::MalformedResponse, "base64 length is not valid");
    }
    while (clean.size() % 4 != 0) {
        clean.push_back('=');
    }
    std::string out(3 * clean.size() / 4, '\0');
    int const n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<unsigned char const*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) {
        throw Error(Errc::MalformedResponse, "invalid base64");
    }
    // EVP_DecodeBlock does not strip the bytes contributed by '=' padding.
    std::size_t padding = 0;
    if (!clean.empty() && clean.back() == '=') {
        ++padding;
        if (clean.size() >= 2 && clean[clean.size() - 2] == '=') {
            ++padding;
        }
    }
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

std::string encode_embedding(Embedding const& e)
{
    std::string out(kEmbeddingMagic);
    put_u32_le(out, static_cast<std::uint32_t>(e.dim()));
    for (double x : e.values()) {
        put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
    return out;
}

Embedding decode_embedding(std::string_view bytes)
{
    if (bytes.size() < kEmbeddingMagic.size() + 4 || bytes.substr(0, kEmbeddingMagic.size()) != kEmbeddingMagic) {
        throw Error(Errc::CacheCorrupt, "embedding record has a bad header");
    }
    bytes.remove_prefix(kEmbeddingMagic.size());
    std::uint32_t const dim = get_u32_le(bytes);
    bytes.remove_prefix(4);
    if (dim == 0 || bytes.size() != 4ULL * dim) {
        throw Error(Errc::CacheCorrupt, "embedding record length does not match its dim");
    }
    std::vector<double> values;
    values.reserve(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
        float const f = std::bit_cast<float>(get_u32_le(bytes.substr(4ULL * i, 4)));
        if (!std::isfinite(f)) {
            throw Error(Errc::CacheCorrupt, "embedding record holds a non-finite value");
        }
        values.push_back(static_cast<double>(f));
    }
    return Embedding(std::move(values));
}

Embedding quantize_f32(Embedding const& e)
{
    std::vector<double> values;
    values.reserve(e.dim());
    for (double x : e.values()) {
        values.push_back(static_cast<double>(static_cast<float>(x)));
    }
    return Embedding(std::move(values));
}

HashStream::HashStream(std::string_view key, std::uint64_t seed)
: key_digest_(sha256(key))
, seed_(seed)
{
}

void HashStream::refill()
{
    std::string material(reinterpret_cast<char const*>(key_digest_.data()), key_digest_.size());
    for (std::uint64_t v : {seed_, counter_}) {
        for (int i = 0; i < 8; ++i) {
            material.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
        }
    }
    block_ = sha256(material);
    ++counter_;
    offset_ = 0;
}

std::uint64_t HashStream::next_u64()
{
    if (offset_ + 8 > block_.size()) {
        refill();
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(block_[offset_ + static_cast<std::size_t>(i)]) << (8 * i);
    }
    offset_ += 8;
    return v;
}

double HashStream::next_uniform()
{
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double HashStream::next_normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double const u1 = next_uniform();
    double const u2 = next_uniform();
    double const r = std::sqrt(-2.0 * std::log(u1));
    double const angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

Embedding hash_to_sphere(std::string_view key, std::uint64_t seed, std::size_t dim)
{
    HashStream stream(key, seed);
    std::vector<double> v(dim);
    for (double& x : v) {
        x = stream.next_normal();
    }
    return normalize(Embedding(std::move(v)));
}

} // namespace mmood::backends
