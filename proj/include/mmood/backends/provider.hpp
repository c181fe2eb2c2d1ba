#pragma once

#include "mmood/backends/cache.hpp"
#include "mmood/embedding.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmood::backends {

enum class ProviderKind { embedding, chat, imagegen };
enum class WireMode { native, vendor_compatible };

[[nodiscard]] std::string_view to_string(ProviderKind k) noexcept;

struct ProviderDescriptor {
    ProviderKind kind = ProviderKind::embedding;
    std::string endpoint;
    std::string model_id;
    std::optional<std::string> auth_token;
    /// Environment variable the token was read from, if any.
    std::string auth_env;
    std::chrono::milliseconds timeout{60'000};
    WireMode wire_mode = WireMode::native;
    /// Extra attempts after a transport failure, with a fixed pause between.
    int transport_retries = 2;
    std::chrono::milliseconds retry_backoff{250};

    /// Throws ConfigError on a malformed endpoint or non-positive timeout.
    void validate() const;
};

enum class Role { user, assistant };

struct Message {
    Role role = Role::user;
    std::string text;
    /// Only user messages carry images.
    std::optional<ImageRef> image;

    friend bool operator==(Message const&, Message const&) = default;
};

/// Alternating user/assistant history, user first.
class Conversation {
public:
    [[nodiscard]] std::vector<Message> const& messages() const noexcept { return messages_; }
    [[nodiscard]] std::size_t size() const noexcept { return messages_.size(); }
    [[nodiscard]] bool empty() const noexcept { return messages_.empty(); }

    /// Throws PreconditionViolation when the role sequence would break.
    void append(Message msg);

private:
    std::vector<Message> messages_;
};

/// Reads a local image file, or fetches it when the ref is an http(s) URL.
/// Throws IOError.
[[nodiscard]] std::string read_image(ImageRef const& ref);

// Raw model endpoints. Implementations must tolerate concurrent calls.

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    [[nodiscard]] virtual std::string const& model_id() const = 0;
    [[nodiscard]] virtual std::vector<Embedding> embed_texts(std::span<std::string const> texts) = 0;
    /// `images` holds encoded image file contents.
    [[nodiscard]] virtual std::vector<Embedding> embed_images(std::span<std::string const> images) = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    [[nodiscard]] virtual std::string const& model_id() const = 0;
    /// `history` ends with the new user message. Returns the reply text.
    [[nodiscard]] virtual std::string complete(std::span<Message const> history) = 0;
};

class ImageGenBackend {
public:
    virtual ~ImageGenBackend() = default;
    [[nodiscard]] virtual std::string const& model_id() const = 0;
    /// Returns encoded image bytes.
    [[nodiscard]] virtual std::string generate(std::string const& prompt) = 0;
};

/// Text/image encoder front: batching, per-item cache lookups, unit
/// normalization, float32 rounding and dim consistency.
class Encoder {
public:
    Encoder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<ContentCache> cache);

    [[nodiscard]] std::vector<Embedding> embed_text(std::span<std::string const> texts);
    /// Image refs are file paths; the cache keys on file content.
    [[nodiscard]] std::vector<Embedding> embed_image(std::span<ImageRef const> images);

    [[nodiscard]] std::size_t backend_items() const noexcept { return backend_items_; }

private:
    std::vector<Embedding> embed(std::string_view modality, std::span<std::string const> inputs);

    std::shared_ptr<EmbeddingBackend> backend_;
    std::shared_ptr<ContentCache> cache_;
    std::atomic<std::size_t> backend_items_{0};
    std::atomic<std::size_t> dim_{0};
};

struct ChatOptions {
    /// When set, replies containing any pattern (case-insensitive) raise
    /// RefusalDetected.
    bool strict_refusals = false;
    std::vector<std::string> refusal_patterns{
        "can't understand the content of the image",
        "cannot understand the content of the image",
        "I'm sorry, but I can't",
    };
};

class ChatClient {
public:
    ChatClient(std::shared_ptr<ChatBackend> backend, ChatOptions options = {});

    /// Appends the user message and the reply to `conv`; on failure `conv`
    /// is left untouched.
    std::string chat(Conversation& conv, std::string text, std::optional<ImageRef> image = std::nullopt);

    [[nodiscard]] std::size_t calls() const noexcept { return calls_; }

private:
    std::shared_ptr<ChatBackend> backend_;
    ChatOptions options_;
    std::atomic<std::size_t> calls_{0};
};

/// Image generator front. Generated bytes are stored content-addressed in
/// the cache and the returned ref is that file's path.
class ImageGenerator {
public:
    ImageGenerator(std::shared_ptr<ImageGenBackend> backend, std::shared_ptr<ContentCache> cache);

    [[nodiscard]] ImageRef generate_image(std::string const& prompt);

    /// Requests made through this front, cached or not.
    [[nodiscard]] std::size_t calls() const noexcept { return calls_; }
    [[nodiscard]] std::size_t backend_calls() const noexcept { return backend_calls_; }

private:
    std::shared_ptr<ImageGenBackend> backend_;
    std::shared_ptr<ContentCache> cache_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> backend_calls_{0};
};

} // namespace mmood::backends
