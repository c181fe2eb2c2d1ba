#pragma once

#include "mmood/backends/provider.hpp"

#include <json.hpp>

namespace mmood::backends {

/// JSON-over-HTTP POST with bearer auth, timeout and fixed-backoff retries
/// on transport failures. Safe for concurrent use (one connection per call).
class HttpTransport {
public:
    explicit HttpTransport(ProviderDescriptor descriptor);

    /// `path` is appended to the endpoint's base path.
    [[nodiscard]] nlohmann::json post(std::string const& path, nlohmann::json const& body) const;

    [[nodiscard]] ProviderDescriptor const& descriptor() const noexcept { return descriptor_; }

private:
    ProviderDescriptor descriptor_;
    std::string origin_;
    std::string base_path_;
};

/// Request/response shapes for both wire modes; exposed for tests.
namespace wire {

[[nodiscard]] nlohmann::json embed_request(WireMode mode, std::string const& model, std::string_view modality,
                                           std::span<std::string const> inputs);
[[nodiscard]] std::vector<Embedding> embed_response(WireMode mode, nlohmann::json const& body);

/// Image refs in `history` are read from disk and inlined as base64.
[[nodiscard]] nlohmann::json chat_request(WireMode mode, std::string const& model, std::span<Message const> history);
[[nodiscard]] std::string chat_response(WireMode mode, nlohmann::json const& body);

[[nodiscard]] nlohmann::json generate_request(WireMode mode, std::string const& model, std::string const& prompt);
[[nodiscard]] std::string generate_response(WireMode mode, nlohmann::json const& body);

[[nodiscard]] std::string embed_path(WireMode mode);
[[nodiscard]] std::string chat_path(WireMode mode);
[[nodiscard]] std::string generate_path(WireMode mode);

} // namespace wire

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(ProviderDescriptor descriptor);

    [[nodiscard]] std::string const& model_id() const override { return transport_.descriptor().model_id; }
    [[nodiscard]] std::vector<Embedding> embed_texts(std::span<std::string const> texts) override;
    [[nodiscard]] std::vector<Embedding> embed_images(std::span<std::string const> images) override;

private:
    std::vector<Embedding> embed(std::string_view modality, std::span<std::string const> inputs);

    HttpTransport transport_;
};

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(ProviderDescriptor descriptor);

    [[nodiscard]] std::string const& model_id() const override { return transport_.descriptor().model_id; }
    [[nodiscard]] std::string complete(std::span<Message const> history) override;

private:
    HttpTransport transport_;
};

class HttpImageGenBackend : public ImageGenBackend {
public:
    explicit HttpImageGenBackend(ProviderDescriptor descriptor);

    [[nodiscard]] std::string const& model_id() const override { return transport_.descriptor().model_id; }
    [[nodiscard]] std::string generate(std::string const& prompt) override;

private:
    HttpTransport transport_;
};

} // namespace mmood::backends
