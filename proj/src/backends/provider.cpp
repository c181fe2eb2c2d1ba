#include "mmood/backends/provider.hpp"

#include "mmood/error.hpp"
#include "mmood/text.hpp"

#include <cmath>
#include <regex>

namespace mmood::backends {

std::string_view to_string(ProviderKind k) noexcept
{
    switch (k) {
    case ProviderKind::embedding: return "embedding";
    case ProviderKind::chat: return "chat";
    case ProviderKind::imagegen: return "imagegen";
    }
    return "unknown";
}

void ProviderDescriptor::validate() const
{
    static std::regex const url(R"(^https?://[^/\s:]+(:[0-9]{1,5})?(/\S*)?$)");
    if (!std::regex_match(endpoint, url)) {
        throw Error(Errc::ConfigError, "malformed endpoint '" + endpoint + "'");
    }
    if (timeout.count() <= 0) {
        throw Error(Errc::ConfigError, "timeout must be positive");
    }
    if (transport_retries < 0) {
        throw Error(Errc::ConfigError, "transport_retries must be >= 0");
    }
}

void Conversation::append(Message msg)
{
    Role const expected = (messages_.size() % 2 == 0) ? Role::user : Role::assistant;
    if (msg.role != expected) {
        throw Error(Errc::PreconditionViolation, "conversation roles must alternate starting with user");
    }
    if (msg.role == Role::assistant && msg.image) {
        throw Error(Errc::PreconditionViolation, "assistant messages cannot carry images");
    }
    messages_.push_back(std::move(msg));
}

Encoder::Encoder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<ContentCache> cache)
: backend_(std::move(backend))
, cache_(std::move(cache))
{
}

std::vector<Embedding> Encoder::embed(std::string_view modality, std::span<std::string const> inputs)
{
    if (inputs.empty()) {
        throw Error(Errc::PreconditionViolation, "empty embedding batch");
    }
    std::string const kind = std::string("embedding/") + std::string(modality);
    std::vector<std::optional<Embedding>> results(inputs.size());
    std::vector<std::size_t> pending;
    std::vector<std::string> pending_inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (cache_) {
            if (auto hit = cache_->get(CacheKey::make(kind, backend_->model_id(), inputs[i]))) {
                results[i] = decode_embedding(*hit);
                continue;
            }
        }
        pending.push_back(i);
        pending_inputs.push_back(inputs[i]);
    }
    if (!pending.empty()) {
        auto fresh = modality == "text" ? backend_->embed_texts(pending_inputs) : backend_->embed_images(pending_inputs);
        backend_items_ += pending.size();
        if (fresh.size() != pending.size()) {
            throw Error(Errc::MalformedResponse, "backend returned " + std::to_string(fresh.size()) +
                                                     " embeddings for " + std::to_string(pending.size()) + " inputs");
        }
        for (std::size_t j = 0; j < pending.size(); ++j) {
            Embedding e = quantize_f32(normalize(fresh[j]));
            if (cache_) {
                cache_->put(CacheKey::make(kind, backend_->model_id(), pending_inputs[j]), encode_embedding(e));
            }
            results[pending[j]] = std::move(e);
        }
    }
    std::vector<Embedding> out;
    out.reserve(results.size());
    for (auto& r : results) {
        std::size_t expected = 0;
        if (!dim_.compare_exchange_strong(expected, r->dim()) && expected != r->dim()) {
            throw Error(Errc::DimInconsistent, "provider returned dim " + std::to_string(r->dim()) + ", expected " +
                                                   std::to_string(expected));
        }
        out.push_back(std::move(*r));
    }
    return out;
}

std::vector<Embedding> Encoder::embed_text(std::span<std::string const> texts)
{
    for (auto const& t : texts) {
        if (t.empty()) {
            throw Error(Errc::PreconditionViolation, "cannot embed an empty text");
        }
    }
    return embed("text", texts);
}

std::vector<Embedding> Encoder::embed_image(std::span<ImageRef const> images)
{
    std::vector<std::string> contents;
    contents.reserve(images.size());
    for (auto const& ref : images) {
        contents.push_back(read_image(ref));
    }
    return embed("image", contents);
}

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, ChatOptions options)
: backend_(std::move(backend))
, options_(std::move(options))
{
}

std::string ChatClient::chat(Conversation& conv, std::string text, std::optional<ImageRef> image)
{
    if (conv.size() % 2 != 0) {
        throw Error(Errc::PreconditionViolation, "conversation already ends with a user message");
    }
    std::vector<Message> history = conv.messages();
    history.push_back({Role::user, std::move(text), std::move(image)});
    ++calls_;
    std::string reply = backend_->complete(history);
    if (options_.strict_refusals) {
        std::string const lowered = to_lower(reply);
        for (auto const& pattern : options_.refusal_patterns) {
            if (lowered.find(to_lower(pattern)) != std::string::npos) {
                throw Error(Errc::RefusalDetected, "reply matched refusal pattern '" + pattern + "'");
            }
        }
    }
    conv.append(std::move(history.back()));
    conv.append({Role::assistant, reply, std::nullopt});
    return reply;
}

ImageGenerator::ImageGenerator(std::shared_ptr<ImageGenBackend> backend, std::shared_ptr<ContentCache> cache)
: backend_(std::move(backend))
, cache_(std::move(cache))
{
    if (!cache_) {
        throw Error(Errc::PreconditionViolation, "image generation needs a cache directory");
    }
}

ImageRef ImageGenerator::generate_image(std::string const& prompt)
{
    if (prompt.empty()) {
        throw Error(Errc::PreconditionViolation, "image prompt must be non-empty");
    }
    ++calls_;
    auto const key = CacheKey::make("imagegen", backend_->model_id(), prompt);
    if (!cache_->get(key)) {
        ++backend_calls_;
        std::string bytes = backend_->generate(prompt);
        if (bytes.empty()) {
            throw Error(Errc::MalformedResponse, "image generator returned no bytes");
        }
        cache_->put(key, bytes);
    }
    return cache_->path_for(key).string();
}

} // namespace mmood::backends
