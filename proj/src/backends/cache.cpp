#include "mmood/backends/cache.hpp"

#include "mmood/error.hpp"
#include "mmood/text.hpp"

namespace mmood::backends {

namespace fs = std::filesystem;

namespace {

fs::path sidecar(fs::path p)
{
    p.replace_extension(".sha256");
    return p;
}

} // namespace

CacheKey CacheKey::make(std::string_view kind, std::string_view model_id, std::string_view input)
{
    std::string material;
    material.reserve(kind.size() + model_id.size() + input.size() + 2);
    material.append(kind);
    material.push_back('\0');
    material.append(model_id);
    material.push_back('\0');
    material.append(input);
    return CacheKey(sha256(material));
}

ContentCache::ContentCache(fs::path root)
: root_(std::move(root))
{
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) {
        throw Error(Errc::IOError, "cannot create cache directory '" + root_.string() + "'");
    }
}

fs::path ContentCache::path_for(CacheKey const& key) const
{
    auto const hex = key.hex();
    return root_ / hex.substr(0, 2) / (hex + ".bin");
}

std::optional<std::string> ContentCache::get(CacheKey const& key) const
{
    auto const path = path_for(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) {
        ++misses_;
        return std::nullopt;
    }
    std::string value = read_file(path.string());
    auto const check = sidecar(path);
    if (!fs::exists(check, ec) || trim(read_file(check.string())) != to_hex(sha256(value))) {
        throw Error(Errc::CacheCorrupt, "digest mismatch for " + path.string());
    }
    ++hits_;
    return value;
}

void ContentCache::put(CacheKey const& key, std::string_view value)
{
    auto const path = path_for(key);
    std::error_code ec;
    if (fs::exists(path, ec)) {
        if (read_file(path.string()) != value) {
            throw Error(Errc::WriteConflict, "cache entry " + key.hex() + " already holds different bytes");
        }
        return;
    }
    // Sidecar first: a reader that sees the value also sees its digest.
    write_file_atomic(sidecar(path).string(), to_hex(sha256(value)) + "\n");
    write_file_atomic(path.string(), value);
}

} // namespace mmood::backends
