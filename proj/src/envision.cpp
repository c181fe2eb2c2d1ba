#include "mmood/envision.hpp"

#include "mmood/error.hpp"
#include "mmood/parallel.hpp"
#include "mmood/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <regex>
#include <set>

namespace mmood {

namespace {

using backends::ChatClient;
using backends::Conversation;

bool is_placeholder_char(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Positions of `{name}` tokens whose name is an identifier.
struct Token {
    std::size_t begin;
    std::size_t end;
    std::string name;
};

std::vector<Token> scan_placeholders(std::string const& body)
{
    std::vector<Token> tokens;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_placeholder_char(body[j])) {
            ++j;
        }
        if (j > i + 1 && j < body.size() && body[j] == '}') {
            tokens.push_back({i, j + 1, body.substr(i + 1, j - i - 1)});
            i = j;
        }
    }
    return tokens;
}

std::string strip_wrapping(std::string s)
{
    static constexpr std::string_view wrap = "[]\"'`()*";
    for (;;) {
        s = trim(s);
        if (s.empty()) {
            return s;
        }
        bool changed = false;
        if (wrap.find(s.front()) != std::string_view::npos) {
            s.erase(0, 1);
            changed = true;
        }
        if (!s.empty() && wrap.find(s.back()) != std::string_view::npos) {
            s.pop_back();
            changed = true;
        }
        if (!changed) {
            return s;
        }
    }
}

bool is_backend_failure(Errc code)
{
    switch (code) {
    case Errc::BackendError:
    case Errc::BackendUnreachable:
    case Errc::MalformedResponse:
    case Errc::RefusalDetected:
    case Errc::DimInconsistent:
    case Errc::IOError:
        return true;
    default:
        return false;
    }
}

// Runs one pipeline step, reporting backend failures as BackendError tagged
// with the step name.
template <typename F>
auto step(std::string const& name, F&& f)
{
    try {
        return f();
    }
    catch (Error const& e) {
        if (is_backend_failure(e.code())) {
            throw Error(Errc::BackendError, e.what(), name);
        }
        throw e.with_stage(name);
    }
}

std::string join_labels(std::vector<std::string> const& labels)
{
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += labels[i];
    }
    return out;
}

// Sends the same prompt up to `attempts` times on a scratch copy of `conv`
// until the reply yields at least one label; the successful exchange is
// committed to `conv`.
std::vector<std::string> ask_for_labels(ChatClient& chat, Conversation& conv, std::string const& prompt,
                                        std::optional<ImageRef> const& image, int attempts)
{
    for (int a = 0; a < attempts; ++a) {
        Conversation scratch = conv;
        auto labels = parse_label_response(chat.chat(scratch, prompt, image));
        if (!labels.empty()) {
            conv = std::move(scratch);
            return labels;
        }
    }
    throw Error(Errc::EmptyResponse, "no labels after " + std::to_string(attempts) + " attempts");
}

void append_unique(std::vector<std::string>& acc, std::set<std::string>& seen, std::vector<std::string> const& more)
{
    for (auto const& label : more) {
        if (seen.insert(to_lower(trim(label))).second) {
            acc.push_back(label);
        }
    }
}

} // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body, bool attaches_image)
: name_(std::move(name))
, body_(std::move(body))
, attaches_image_(attaches_image)
{
    for (auto const& tok : scan_placeholders(body_)) {
        if (tok.name != kClassInfo && tok.name != kEnvisionNums) {
            throw Error(Errc::ConfigError, "template '" + name_ + "' uses unknown placeholder {" + tok.name + "}");
        }
        if (std::find(placeholders_.begin(), placeholders_.end(), tok.name) == placeholders_.end()) {
            placeholders_.push_back(tok.name);
        }
    }
}

PromptTemplate PromptTemplate::load(std::string name, std::string const& path, bool attaches_image)
{
    return PromptTemplate(std::move(name), read_file(path), attaches_image);
}

std::string render_prompt(PromptTemplate const& tpl, std::map<std::string, std::string> const& bindings)
{
    auto const& body = tpl.body();
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    for (auto const& tok : scan_placeholders(body)) {
        auto const it = bindings.find(tok.name);
        if (it == bindings.end()) {
            throw Error(Errc::UnboundPlaceholder, "template '" + tpl.name() + "' needs {" + tok.name + "}");
        }
        out.append(body, pos, tok.begin - pos);
        out += it->second;
        pos = tok.end;
    }
    out.append(body, pos, std::string::npos);
    return out;
}

std::vector<std::string> parse_label_response(std::string const& text, bool strict)
{
    static std::regex const numbered(R"(^[0-9]+\.\s+(.*)$)");
    std::vector<std::string> labels;
    for (auto const& raw : split_lines(text)) {
        auto const line = trim(raw);
        std::string item;
        std::smatch m;
        if (line.starts_with("- ")) {
            item = line.substr(2);
        }
        else if (std::regex_match(line, m, numbered)) {
            item = m[1].str();
        }
        else {
            continue;
        }
        item = strip_wrapping(std::move(item));
        if (!item.empty()) {
            labels.push_back(std::move(item));
        }
    }
    if (strict && labels.empty()) {
        throw Error(Errc::EmptyResponse, "reply contains no labels");
    }
    return labels;
}

void EnvisionConfig::validate() const
{
    auto fail = [](std::string const& msg) { throw Error(Errc::InvalidConfig, msg); };
    if (n_o < 1) fail("n_o must be >= 1");
    if (big_l < 1) fail("big_l must be >= 1");
    if (m < 1) fail("m must be >= 1");
    if (n_rounds < 1) fail("n_rounds must be >= 1");
    if (!(mixing_ratio >= 0.0 && mixing_ratio <= 1.0)) fail("mixing_ratio must lie in [0, 1]");
    if (max_attempts < 1) fail("max_attempts must be >= 1");
    if (max_in_flight < 1) fail("max_in_flight must be >= 1");
}

std::vector<std::string> near_envision(std::string const& id_label, ImageRef const& rep_image, int n_o,
                                       ChatClient& chat, PromptTemplate const& tpl, int max_attempts)
{
    if (n_o < 1) {
        throw Error(Errc::PreconditionViolation, "n_o must be >= 1");
    }
    return step("near", [&] {
        auto const prompt = render_prompt(tpl, {{kClassInfo, id_label}, {kEnvisionNums, std::to_string(n_o)}});
        Conversation conv;
        std::optional<ImageRef> image;
        if (tpl.attaches_image()) {
            image = rep_image;
        }
        return ask_for_labels(chat, conv, prompt, image, max_attempts);
    });
}

std::vector<std::string> near_envision_all(std::vector<NearQuery> const& queries, EnvisionConfig const& cfg,
                                           ChatClient& chat, PromptTemplate const& tpl)
{
    std::vector<std::vector<std::string>> per_class(queries.size());
    parallel_for(queries.size(), static_cast<std::size_t>(cfg.max_in_flight), [&](std::size_t i) {
        per_class[i] = near_envision(queries[i].id_label, queries[i].rep_image, cfg.n_o, chat, tpl, cfg.max_attempts);
    });
    std::vector<std::string> out;
    for (auto& labels : per_class) {
        out.insert(out.end(), labels.begin(), labels.end());
    }
    return out;
}

std::vector<std::string> summarize_primary_categories(std::vector<std::string> const& id_labels, int m,
                                                      ChatClient& chat, PromptTemplate const& tpl,
                                                      int max_attempts)
{
    if (m < 1 || static_cast<std::size_t>(m) > id_labels.size()) {
        throw Error(Errc::PreconditionViolation, "m must satisfy 1 <= m <= K");
    }
    return step("summarize", [&] {
        auto const prompt = render_prompt(tpl, {{kClassInfo, join_labels(id_labels)}, {kEnvisionNums, std::to_string(m)}});
        std::vector<std::string> categories;
        std::set<std::string> seen;
        for (int a = 0; a < max_attempts && categories.size() < static_cast<std::size_t>(m); ++a) {
            Conversation conv;
            append_unique(categories, seen, parse_label_response(chat.chat(conv, prompt)));
        }
        if (categories.size() < static_cast<std::size_t>(m)) {
            throw Error(Errc::CategoryCountMismatch, "got " + std::to_string(categories.size()) + " of " +
                                                         std::to_string(m) + " categories");
        }
        categories.resize(static_cast<std::size_t>(m));
        return categories;
    });
}

FarResult far_envision(std::vector<std::string> const& primary_categories, EnvisionConfig const& cfg,
                       ChatClient& chat, backends::ImageGenerator& gen, backends::Encoder* encoder,
                       PromptSet const& prompts)
{
    if (primary_categories.empty()) {
        throw Error(Errc::PreconditionViolation, "far branch needs at least one primary category");
    }
    cfg.validate();
    auto const per_round = static_cast<int>(std::ceil(static_cast<double>(cfg.big_l) / cfg.n_rounds));
    std::map<std::string, std::string> const bindings{
        {kClassInfo, join_labels(primary_categories)},
        {kEnvisionNums, std::to_string(per_round)},
    };

    FarResult result;
    std::set<std::string> seen;
    for (int r = 0; r < cfg.n_rounds; ++r) {
        FarRound round;
        Conversation conv;

        round.sketch = step("sketch", [&] {
            return ask_for_labels(chat, conv, render_prompt(prompts.sketch, bindings), std::nullopt, cfg.max_attempts);
        });

        auto const picked = step("select", [&] {
            return parse_label_response(chat.chat(conv, render_prompt(prompts.select, bindings)));
        });
        if (!picked.empty()) {
            round.representative = picked.front();
        }
        else {
            if (encoder == nullptr) {
                throw Error(Errc::EmptyResponse, "selection reply unparseable and no encoder for the fallback", "select");
            }
            round.representative_from_fallback = true;
            round.representative = step("select", [&] {
                std::vector<std::string> texts;
                for (auto const& c : primary_categories) {
                    texts.push_back(label_prompt(c));
                }
                auto const centre = mean_embedding(encoder->embed_text(texts));
                texts.clear();
                for (auto const& s : round.sketch) {
                    texts.push_back(label_prompt(s));
                }
                auto const sketched = encoder->embed_text(texts);
                std::size_t best = 0;
                double lowest = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < sketched.size(); ++i) {
                    double const c = cosine(sketched[i], centre);
                    if (c < lowest) {
                        lowest = c;
                        best = i;
                    }
                }
                return round.sketch[best];
            });
        }

        round.generated_image = step("generate", [&] { return gen.generate_image(round.representative); });

        std::optional<ImageRef> image;
        if (prompts.elaborate.attaches_image()) {
            image = round.generated_image;
        }
        round.elaborated = step("elaborate", [&] {
            return ask_for_labels(chat, conv, render_prompt(prompts.elaborate, bindings), image, cfg.max_attempts);
        });
        append_unique(result.labels, seen, round.elaborated);
        result.rounds.push_back(std::move(round));
    }
    return result;
}

std::vector<std::string> postprocess_labels(std::vector<std::string> const& raw,
                                            std::vector<std::string> const& id_labels, int big_l)
{
    if (big_l < 1) {
        throw Error(Errc::PreconditionViolation, "big_l must be >= 1");
    }
    std::set<std::string> seen;
    for (auto const& id : id_labels) {
        seen.insert(to_lower(trim(id)));
    }
    std::vector<std::string> out;
    for (auto const& label : raw) {
        if (out.size() == static_cast<std::size_t>(big_l)) {
            break;
        }
        auto cleaned = to_lower(trim(label));
        if (cleaned.empty() || !seen.insert(cleaned).second) {
            continue;
        }
        out.push_back(std::move(cleaned));
    }
    return out;
}

std::vector<std::string> mix_label_sets(std::vector<std::string> const& near, std::vector<std::string> const& far,
                                        double ratio, int big_l)
{
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw Error(Errc::PreconditionViolation, "mixing ratio must lie in [0, 1]");
    }
    if (big_l < 0) {
        throw Error(Errc::PreconditionViolation, "big_l must be >= 0");
    }
    auto const limit = static_cast<std::size_t>(big_l);
    auto const quota = std::min(limit, static_cast<std::size_t>(std::ceil(ratio * big_l - 1e-9)));
    std::vector<std::string> out;
    std::set<std::string> taken;
    for (std::size_t i = 0; i < near.size() && out.size() < quota; ++i) {
        out.push_back(near[i]);
        taken.insert(to_lower(trim(near[i])));
    }
    for (std::size_t i = 0; i < far.size() && out.size() < limit; ++i) {
        if (taken.insert(to_lower(trim(far[i]))).second) {
            out.push_back(far[i]);
        }
    }
    return out;
}

std::vector<std::string> random_label_source(std::vector<std::string> const& wordlist, int big_l, std::uint64_t seed)
{
    if (big_l < 0) {
        throw Error(Errc::PreconditionViolation, "big_l must be >= 0");
    }
    std::vector<std::string> pool;
    std::set<std::string> seen;
    for (auto const& w : wordlist) {
        auto t = trim(w);
        if (!t.empty() && seen.insert(to_lower(t)).second) {
            pool.push_back(std::move(t));
        }
    }
    auto const need = static_cast<std::size_t>(big_l);
    if (pool.size() < need) {
        throw Error(Errc::WordlistTooSmall, "wordlist has " + std::to_string(pool.size()) + " distinct words, need " +
                                                std::to_string(need));
    }
    std::mt19937_64 rng(seed);
    // Unbiased draw in [0, bound) by rejection; std::uniform_int_distribution
    // is not reproducible across standard libraries.
    auto draw = [&rng](std::uint64_t bound) {
        std::uint64_t const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = rng();
        while (x >= limit) {
            x = rng();
        }
        return x % bound;
    };
    for (std::size_t i = 0; i < need; ++i) {
        auto const j = i + static_cast<std::size_t>(draw(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(need);
    return pool;
}

std::string label_prompt(std::string const& label)
{
    return "a photo of a " + to_lower(trim(label));
}

} // namespace mmood
