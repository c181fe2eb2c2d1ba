#pragma once

#include "mmood/backends/codec.hpp"

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace mmood::backends {

/// SHA-256 over (provider kind, model id, canonical input bytes).
class CacheKey {
public:
    static CacheKey make(std::string_view kind, std::string_view model_id, std::string_view input);

    [[nodiscard]] Digest const& digest() const noexcept { return digest_; }
    [[nodiscard]] std::string hex() const { return to_hex(digest_); }

    friend bool operator==(CacheKey const&, CacheKey const&) = default;

private:
    explicit CacheKey(Digest d) : digest_(d) {}
    Digest digest_;
};

/// Write-once content store on disk. Entries live at
/// `<root>/<hex[0:2]>/<hex>.bin` with a `.sha256` sidecar over the value
/// that is checked on every read. Puts are atomic (temp file + rename).
class ContentCache {
public:
    explicit ContentCache(std::filesystem::path root);

    [[nodiscard]] std::optional<std::string> get(CacheKey const& key) const;

    /// A repeated put with identical bytes is a no-op; different bytes
    /// raise WriteConflict.
    void put(CacheKey const& key, std::string_view value);

    [[nodiscard]] std::filesystem::path path_for(CacheKey const& key) const;
    [[nodiscard]] std::filesystem::path const& root() const noexcept { return root_; }

    [[nodiscard]] std::size_t hits() const noexcept { return hits_; }
    [[nodiscard]] std::size_t misses() const noexcept { return misses_; }

private:
    std::filesystem::path root_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
};

} // namespace mmood::backends
