#pragma once

#include "mmood/backends/provider.hpp"

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace mmood::backends {

/// Mock image files start with this line; the embedding mock places them
/// near the text embedding of "a photo of a <label>".
inline constexpr std::string_view kMockImagePrefix = "MOCKIMG label=";

[[nodiscard]] std::string make_mock_image(std::string_view label, std::string_view salt);

/// Seeded hash-to-sphere encoder. Pure function of (input, seed).
class MockEmbeddingBackend : public EmbeddingBackend {
public:
    struct Options {
        std::size_t dim = 64;
        std::uint64_t seed = 0;
        /// Norm of the random offset added to a mock image's label direction.
        double image_noise = 0.6;
        std::string model_id = "mock-encoder";
    };

    explicit MockEmbeddingBackend(Options options);

    [[nodiscard]] std::string const& model_id() const override { return options_.model_id; }
    [[nodiscard]] std::vector<Embedding> embed_texts(std::span<std::string const> texts) override;
    [[nodiscard]] std::vector<Embedding> embed_images(std::span<std::string const> images) override;

    [[nodiscard]] std::size_t text_items() const noexcept { return text_items_; }
    [[nodiscard]] std::size_t image_items() const noexcept { return image_items_; }

private:
    [[nodiscard]] Embedding text_vector(std::string_view text) const;

    Options options_;
    std::atomic<std::size_t> text_items_{0};
    std::atomic<std::size_t> image_items_{0};
};

struct ChatFixture {
    /// Substring looked up in the last "Q:" segment of the newest user
    /// message (the whole message when it has no "Q:").
    std::string match;
    std::string reply;
};

/// Deterministic chat model. Fixtures are consulted first, in order;
/// otherwise the reply is a dash list of seeded vocabulary labels whose
/// length follows the count requested in the prompt. A prompt asking for
/// the "most dissimilar" label gets one label picked from the previous
/// assistant reply.
class MockChatBackend : public ChatBackend {
public:
    struct Options {
        std::uint64_t seed = 0;
        std::vector<ChatFixture> fixtures;
        std::string model_id = "mock-mllm";
    };

    explicit MockChatBackend(Options options);

    [[nodiscard]] std::string const& model_id() const override { return options_.model_id; }
    [[nodiscard]] std::string complete(std::span<Message const> history) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_; }
    /// Every request seen, in arrival order.
    [[nodiscard]] std::vector<std::vector<Message>> requests() const;

private:
    [[nodiscard]] std::string fallback(std::span<Message const> history) const;

    Options options_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mutex_;
    std::vector<std::vector<Message>> requests_;
};

class MockImageGenBackend : public ImageGenBackend {
public:
    struct Options {
        std::uint64_t seed = 0;
        bool fail = false;
        std::string model_id = "mock-diffusion";
    };

    explicit MockImageGenBackend(Options options);

    [[nodiscard]] std::string const& model_id() const override { return options_.model_id; }
    [[nodiscard]] std::string generate(std::string const& prompt) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_; }

private:
    Options options_;
    std::atomic<std::size_t> calls_{0};
};

} // namespace mmood::backends
