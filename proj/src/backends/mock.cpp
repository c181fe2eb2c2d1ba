#include "mmood/backends/mock.hpp"

#include "mmood/error.hpp"
#include "mmood/text.hpp"

#include <array>
#include <regex>
#include <set>

namespace mmood::backends {

namespace {

constexpr std::array kAdjectives = {
    "amber", "basalt", "cobalt", "dusty", "frozen", "gilded", "hollow", "ivory",
    "jagged", "lunar", "mossy", "neon", "rusted", "silent", "tidal", "woven",
};

constexpr std::array kNouns = {
    "anvil", "asteroid", "barnacle", "beacon", "canyon", "carousel", "cathedral", "comet",
    "compass", "coral", "crater", "dune", "easel", "fjord", "fossil", "geyser",
    "glacier", "harbor", "harp", "kiln", "lantern", "lighthouse", "meteor", "mosaic",
    "nebula", "obelisk", "orchard", "pagoda", "quarry", "reef", "satellite", "sextant",
    "spindle", "stalactite", "telescope", "tundra", "turbine", "volcano", "windmill", "ziggurat",
};

std::string question_segment(std::string const& text)
{
    auto const pos = text.rfind("Q:");
    return pos == std::string::npos ? text : text.substr(pos);
}

std::size_t requested_count(std::string const& text)
{
    static std::regex const patterns[] = {
        std::regex(R"(There are (\d+) classes)"),
        std::regex(R"(exactly (\d+))", std::regex::icase),
        std::regex(R"((\d+) (labels|categories|classes))", std::regex::icase),
    };
    for (auto const& re : patterns) {
        std::smatch m;
        if (std::regex_search(text, m, re)) {
            auto const n = std::stoul(m[1].str());
            if (n >= 1 && n <= 1000) {
                return n;
            }
        }
    }
    return 3;
}

std::vector<std::string> dash_items(std::string const& text)
{
    std::vector<std::string> items;
    for (auto const& line : split_lines(text)) {
        auto const t = trim(line);
        if (t.size() > 2 && t.starts_with("- ")) {
            items.push_back(trim(std::string_view(t).substr(2)));
        }
    }
    return items;
}

std::string history_key(std::span<Message const> history)
{
    std::string key;
    for (auto const& m : history) {
        key += m.role == Role::user ? "U:" : "A:";
        key += m.text;
        if (m.image) {
            key += "|img:" + to_hex(sha256(read_image(*m.image)));
        }
        key.push_back('\0');
    }
    return key;
}

} // namespace

std::string make_mock_image(std::string_view label, std::string_view salt)
{
    std::string out(kMockImagePrefix);
    out += label;
    out += "\n";
    out += to_hex(sha256(salt));
    out += "\n";
    return out;
}

MockEmbeddingBackend::MockEmbeddingBackend(Options options)
: options_(std::move(options))
{
    if (options_.dim == 0) {
        throw Error(Errc::ConfigError, "mock embedding dim must be positive");
    }
}

Embedding MockEmbeddingBackend::text_vector(std::string_view text) const
{
    return hash_to_sphere(std::string("text\n") + std::string(text), options_.seed, options_.dim);
}

std::vector<Embedding> MockEmbeddingBackend::embed_texts(std::span<std::string const> texts)
{
    text_items_ += texts.size();
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (auto const& t : texts) {
        out.push_back(text_vector(t));
    }
    return out;
}

std::vector<Embedding> MockEmbeddingBackend::embed_images(std::span<std::string const> images)
{
    image_items_ += images.size();
    std::vector<Embedding> out;
    out.reserve(images.size());
    for (auto const& bytes : images) {
        Embedding noise = hash_to_sphere(std::string("image\n") + bytes, options_.seed, options_.dim);
        if (!bytes.starts_with(kMockImagePrefix)) {
            out.push_back(std::move(noise));
            continue;
        }
        auto const eol = bytes.find('\n');
        auto const label = bytes.substr(kMockImagePrefix.size(), eol - kMockImagePrefix.size());
        Embedding const anchor = text_vector("a photo of a " + to_lower(trim(label)));
        std::vector<double> v(options_.dim);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = anchor[i] + options_.image_noise * noise[i];
        }
        out.push_back(normalize(Embedding(std::move(v))));
    }
    return out;
}

MockChatBackend::MockChatBackend(Options options)
: options_(std::move(options))
{
}

std::string MockChatBackend::complete(std::span<Message const> history)
{
    if (history.empty() || history.back().role != Role::user) {
        throw Error(Errc::PreconditionViolation, "chat request must end with a user message");
    }
    ++calls_;
    {
        std::lock_guard lock(mutex_);
        requests_.emplace_back(history.begin(), history.end());
    }
    auto const query = question_segment(history.back().text);
    for (auto const& f : options_.fixtures) {
        if (query.find(f.match) != std::string::npos) {
            return f.reply;
        }
    }
    return fallback(history);
}

std::vector<std::vector<Message>> MockChatBackend::requests() const
{
    std::lock_guard lock(mutex_);
    return requests_;
}

std::string MockChatBackend::fallback(std::span<Message const> history) const
{
    HashStream stream(history_key(history), options_.seed);
    auto const& prompt = history.back().text;
    if (prompt.find("most dissimilar") != std::string::npos && history.size() >= 2) {
        auto const candidates = dash_items(history[history.size() - 2].text);
        if (!candidates.empty()) {
            return "- " + candidates[stream.next_u64() % candidates.size()] + "\n";
        }
    }
    std::size_t const count = requested_count(question_segment(prompt));
    std::size_t const space = kAdjectives.size() * kNouns.size();
    std::set<std::size_t> used;
    std::string reply;
    while (used.size() < std::min(count, space)) {
        auto const pick = static_cast<std::size_t>(stream.next_u64() % space);
        if (!used.insert(pick).second) {
            continue;
        }
        reply += "- ";
        reply += kAdjectives[pick / kNouns.size()];
        reply += " ";
        reply += kNouns[pick % kNouns.size()];
        reply += "\n";
    }
    return reply;
}

MockImageGenBackend::MockImageGenBackend(Options options)
: options_(std::move(options))
{
}

std::string MockImageGenBackend::generate(std::string const& prompt)
{
    ++calls_;
    if (options_.fail) {
        throw Error(Errc::BackendUnreachable, "mock image generator configured to fail");
    }
    return make_mock_image(prompt, std::to_string(options_.seed) + "\n" + prompt);
}

} // namespace mmood::backends
