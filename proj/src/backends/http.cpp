#include "mmood/backends/http.hpp"

#include "mmood/error.hpp"
#include "mmood/text.hpp"

#include <httplib.h>

#include <regex>
#include <thread>

namespace mmood::backends {

using nlohmann::json;

namespace {

json parse_body(std::string const& body)
{
    try {
        return json::parse(body);
    }
    catch (json::exception const& e) {
        throw Error(Errc::MalformedResponse, std::string("response is not JSON: ") + e.what());
    }
}

template <typename F>
auto guarded(char const* what, F&& f)
{
    try {
        return f();
    }
    catch (json::exception const& e) {
        throw Error(Errc::MalformedResponse, std::string(what) + ": " + e.what());
    }
}

std::string mime_for(std::string const& bytes)
{
    if (bytes.starts_with("\x89PNG")) {
        return "image/png";
    }
    if (bytes.starts_with("\xFF\xD8")) {
        return "image/jpeg";
    }
    return "application/octet-stream";
}

std::string strip_data_url(std::string const& s)
{
    if (s.starts_with("data:")) {
        auto const comma = s.find(',');
        if (comma != std::string::npos) {
            return s.substr(comma + 1);
        }
    }
    return s;
}

} // namespace

std::string read_image(ImageRef const& ref)
{
    static std::regex const url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(ref, m, url)) {
        return read_file(ref);
    }
    httplib::Client client(m[1].str());
    client.set_follow_location(true);
    auto res = client.Get(m[2].matched ? m[2].str() : "/");
    if (!res || res->status != 200) {
        throw Error(Errc::IOError, "cannot fetch image '" + ref + "'");
    }
    return res->body;
}

HttpTransport::HttpTransport(ProviderDescriptor descriptor)
: descriptor_(std::move(descriptor))
{
    descriptor_.validate();
    static std::regex const url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    std::regex_match(descriptor_.endpoint, m, url);
    origin_ = m[1].str();
    base_path_ = m[2].str();
    while (!base_path_.empty() && base_path_.back() == '/') {
        base_path_.pop_back();
    }
}

json HttpTransport::post(std::string const& path, json const& body) const
{
    std::string const payload = body.dump();
    std::string const full_path = base_path_ + path;
    std::string last_error;
    for (int attempt = 0; attempt <= descriptor_.transport_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(descriptor_.retry_backoff);
        }
        httplib::Client client(origin_);
        auto const secs = descriptor_.timeout.count() / 1000;
        auto const usecs = (descriptor_.timeout.count() % 1000) * 1000;
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (descriptor_.auth_token) {
            headers.emplace("Authorization", "Bearer " + *descriptor_.auth_token);
        }
        auto res = client.Post(full_path, headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(Errc::BackendError, "HTTP " + std::to_string(res->status) + " from " + origin_ + full_path);
        }
        return parse_body(res->body);
    }
    throw Error(Errc::BackendUnreachable, origin_ + full_path + ": " + last_error);
}

namespace wire {

std::string embed_path(WireMode mode)
{
    return mode == WireMode::native ? "/embed" : "/embeddings";
}

std::string chat_path(WireMode mode)
{
    return mode == WireMode::native ? "/chat" : "/chat/completions";
}

std::string generate_path(WireMode mode)
{
    return mode == WireMode::native ? "/generate" : "/images/generations";
}

json embed_request(WireMode mode, std::string const& model, std::string_view modality,
                   std::span<std::string const> inputs)
{
    json items = json::array();
    for (auto const& in : inputs) {
        if (modality == "text") {
            items.push_back(in);
        }
        else if (mode == WireMode::native) {
            items.push_back(base64_encode(in));
        }
        else {
            items.push_back("data:" + mime_for(in) + ";base64," + base64_encode(in));
        }
    }
    if (mode == WireMode::native) {
        return {{"model", model}, {"modality", std::string(modality)}, {"inputs", std::move(items)}};
    }
    return {{"model", model}, {"input", std::move(items)}};
}

std::vector<Embedding> embed_response(WireMode mode, json const& body)
{
    return guarded("embedding response", [&] {
        std::vector<std::vector<double>> rows;
        if (mode == WireMode::native) {
            for (auto const& row : body.at("embeddings")) {
                rows.push_back(row.get<std::vector<double>>());
            }
        }
        else {
            auto const& data = body.at("data");
            rows.resize(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto const idx = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
                if (idx >= rows.size()) {
                    throw Error(Errc::MalformedResponse, "embedding index out of range");
                }
                rows[idx] = data[i].at("embedding").get<std::vector<double>>();
            }
        }
        std::vector<Embedding> out;
        out.reserve(rows.size());
        for (auto& r : rows) {
            try {
                out.emplace_back(std::move(r));
            }
            catch (Error const& e) {
                throw Error(Errc::MalformedResponse, e.detail());
            }
        }
        return out;
    });
}

json chat_request(WireMode mode, std::string const& model, std::span<Message const> history)
{
    json messages = json::array();
    for (auto const& m : history) {
        std::string const role = m.role == Role::user ? "user" : "assistant";
        std::optional<std::string> image_bytes;
        if (m.image) {
            image_bytes = read_image(*m.image);
        }
        if (mode == WireMode::native) {
            json msg{{"role", role}, {"text", m.text}};
            if (image_bytes) {
                msg["image_b64"] = base64_encode(*image_bytes);
            }
            messages.push_back(std::move(msg));
        }
        else if (!image_bytes) {
            messages.push_back({{"role", role}, {"content", m.text}});
        }
        else {
            json parts = json::array();
            parts.push_back({{"type", "text"}, {"text", m.text}});
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:" + mime_for(*image_bytes) + ";base64," +
                                                        base64_encode(*image_bytes)}}}});
            messages.push_back({{"role", role}, {"content", std::move(parts)}});
        }
    }
    return {{"model", model}, {"messages", std::move(messages)}};
}

std::string chat_response(WireMode mode, json const& body)
{
    return guarded("chat response", [&] {
        if (mode == WireMode::native) {
            return body.at("text").get<std::string>();
        }
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    });
}

json generate_request(WireMode mode, std::string const& model, std::string const& prompt)
{
    if (mode == WireMode::native) {
        return {{"model", model}, {"prompt", prompt}};
    }
    return {{"model", model}, {"prompt", prompt}, {"n", 1}, {"response_format", "b64_json"}};
}

std::string generate_response(WireMode mode, json const& body)
{
    auto const encoded = guarded("generate response", [&] {
        if (mode == WireMode::native) {
            return body.at("image_b64").get<std::string>();
        }
        return body.at("data").at(0).at("b64_json").get<std::string>();
    });
    return base64_decode(strip_data_url(encoded));
}

} // namespace wire

HttpEmbeddingBackend::HttpEmbeddingBackend(ProviderDescriptor descriptor)
: transport_(std::move(descriptor))
{
}

std::vector<Embedding> HttpEmbeddingBackend::embed(std::string_view modality, std::span<std::string const> inputs)
{
    auto const mode = transport_.descriptor().wire_mode;
    auto out = wire::embed_response(
        mode, transport_.post(wire::embed_path(mode), wire::embed_request(mode, model_id(), modality, inputs)));
    if (out.size() != inputs.size()) {
        throw Error(Errc::MalformedResponse, "expected " + std::to_string(inputs.size()) + " embeddings, got " +
                                                 std::to_string(out.size()));
    }
    for (auto const& e : out) {
        if (e.dim() != out.front().dim()) {
            throw Error(Errc::DimInconsistent, "embeddings of mixed dim in one response");
        }
    }
    return out;
}

std::vector<Embedding> HttpEmbeddingBackend::embed_texts(std::span<std::string const> texts)
{
    return embed("text", texts);
}

std::vector<Embedding> HttpEmbeddingBackend::embed_images(std::span<std::string const> images)
{
    return embed("image", images);
}

HttpChatBackend::HttpChatBackend(ProviderDescriptor descriptor)
: transport_(std::move(descriptor))
{
}

std::string HttpChatBackend::complete(std::span<Message const> history)
{
    auto const mode = transport_.descriptor().wire_mode;
    return wire::chat_response(mode,
                               transport_.post(wire::chat_path(mode), wire::chat_request(mode, model_id(), history)));
}

HttpImageGenBackend::HttpImageGenBackend(ProviderDescriptor descriptor)
: transport_(std::move(descriptor))
{
}

std::string HttpImageGenBackend::generate(std::string const& prompt)
{
    auto const mode = transport_.descriptor().wire_mode;
    return wire::generate_response(
        mode, transport_.post(wire::generate_path(mode), wire::generate_request(mode, model_id(), prompt)));
}

} // namespace mmood::backends
