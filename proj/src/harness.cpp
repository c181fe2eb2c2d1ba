#include "mmood/harness.hpp"

#include "mmood/backends/http.hpp"
#include "mmood/error.hpp"
#include "mmood/parallel.hpp"
#include "mmood/text.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

namespace mmood {

namespace fs = std::filesystem;
using nlohmann::json;
using backends::ProviderDescriptor;
using backends::ProviderKind;

namespace {

constexpr std::size_t kEmbedBatch = 16;

[[noreturn]] void config_error(std::string const& msg)
{
    throw Error(Errc::ConfigError, msg, "config");
}

std::string resolve(fs::path const& base, std::string const& p)
{
    if (p.empty() || p.find("://") != std::string::npos) {
        return p;
    }
    fs::path path(p);
    if (path.is_relative()) {
        path = base / path;
    }
    return path.lexically_normal().string();
}

void check_keys(json const& obj, std::set<std::string> const& allowed, std::string const& where)
{
    if (!obj.is_object()) {
        config_error(where + " must be an object");
    }
    for (auto const& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            config_error("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_opt(json const& obj, char const* key, T& out)
{
    if (obj.contains(key) && !obj.at(key).is_null()) {
        out = obj.at(key).get<T>();
    }
}

ProviderDescriptor descriptor_from_json(ProviderKind kind, json const& j)
{
    check_keys(j, {"endpoint", "model", "auth_env", "timeout_ms", "wire_mode", "transport_retries", "retry_backoff_ms"},
               std::string("providers.") + std::string(backends::to_string(kind)));
    ProviderDescriptor d;
    d.kind = kind;
    read_opt(j, "endpoint", d.endpoint);
    read_opt(j, "model", d.model_id);
    read_opt(j, "auth_env", d.auth_env);
    if (!d.auth_env.empty()) {
        if (char const* token = std::getenv(d.auth_env.c_str())) {
            d.auth_token = token;
        }
    }
    if (j.contains("timeout_ms")) {
        d.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long long>());
    }
    if (j.contains("wire_mode")) {
        auto const mode = j.at("wire_mode").get<std::string>();
        if (mode == "native") {
            d.wire_mode = backends::WireMode::native;
        }
        else if (mode == "vendor-compatible") {
            d.wire_mode = backends::WireMode::vendor_compatible;
        }
        else {
            config_error("wire_mode must be 'native' or 'vendor-compatible'");
        }
    }
    read_opt(j, "transport_retries", d.transport_retries);
    if (j.contains("retry_backoff_ms")) {
        d.retry_backoff = std::chrono::milliseconds(j.at("retry_backoff_ms").get<long long>());
    }
    return d;
}

std::vector<std::string> read_word_lines(std::string const& path)
{
    std::vector<std::string> words;
    for (auto const& line : split_lines(read_file(path))) {
        auto t = trim(line);
        if (!t.empty()) {
            words.push_back(std::move(t));
        }
    }
    return words;
}

template <typename F>
auto in_stage(char const* stage, F&& f)
{
    try {
        return f();
    }
    catch (Error const& e) {
        throw e.with_stage(stage);
    }
    catch (fs::filesystem_error const& e) {
        throw Error(Errc::IOError, e.what(), stage);
    }
    catch (json::exception const& e) {
        throw Error(Errc::ParseError, e.what(), stage);
    }
}

PromptTemplate pick_prompt(std::optional<std::string> const& path, PromptTemplate const& fallback)
{
    if (!path) {
        return fallback;
    }
    return PromptTemplate::load(fallback.name(), *path, fallback.attaches_image());
}

PromptSet load_prompts(PromptPaths const& paths)
{
    auto const d = PromptSet::defaults();
    return {
        pick_prompt(paths.near, d.near),
        pick_prompt(paths.summarize, d.summarize),
        pick_prompt(paths.sketch, d.sketch),
        pick_prompt(paths.select, d.select),
        pick_prompt(paths.elaborate, d.elaborate),
    };
}

json split_json(ScoredSplit const& s)
{
    json scores = json::object();
    for (auto const& [method, values] : s.scores) {
        scores[method] = values;
    }
    return {{"name", s.name}, {"refs", s.refs}, {"scores", std::move(scores)}};
}

ScoredSplit split_from_json(json const& j)
{
    ScoredSplit s;
    s.name = j.at("name").get<std::string>();
    s.refs = j.at("refs").get<std::vector<std::string>>();
    for (auto const& [method, values] : j.at("scores").items()) {
        s.scores[method] = values.get<std::vector<double>>();
        if (s.scores[method].size() != s.refs.size()) {
            throw Error(Errc::ParseError, "score list for '" + method + "' does not match refs of " + s.name);
        }
    }
    return s;
}

std::vector<std::string> method_names(std::vector<Method> const& methods)
{
    std::vector<std::string> out;
    for (auto m : methods) {
        out.emplace_back(to_string(m));
    }
    return out;
}

} // namespace

DatasetManifest parse_manifest(std::string const& path)
{
    DatasetManifest manifest;
    manifest.name = fs::path(path).stem().string();
    auto const base = fs::path(path).parent_path();
    auto const lines = split_lines(read_file(path));
    for (std::size_t n = 0; n < lines.size(); ++n) {
        auto const line = trim(lines[n]);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        auto const where = path + ":" + std::to_string(n + 1);
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            auto const tab = line.find('\t', start);
            fields.push_back(trim(std::string_view(line).substr(start, tab == std::string::npos ? std::string::npos : tab - start)));
            if (tab == std::string::npos) {
                break;
            }
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw Error(Errc::ParseError, where + ": expected 3 tab-separated fields (line " + std::to_string(n + 1) + ")");
        }
        ManifestRecord rec;
        if (iequals(fields[0], "ID")) {
            rec.split = Split::id;
        }
        else if (iequals(fields[0], "OOD")) {
            rec.split = Split::ood;
        }
        else {
            throw Error(Errc::ParseError, where + ": unknown split '" + fields[0] + "' (line " + std::to_string(n + 1) + ")");
        }
        if (fields[1].empty() || fields[2].empty()) {
            throw Error(Errc::ParseError, where + ": empty label or image ref (line " + std::to_string(n + 1) + ")");
        }
        rec.class_label = fields[1];
        rec.image_ref = resolve(base, fields[2]);
        manifest.records.push_back(std::move(rec));
    }
    if (manifest.records.empty()) {
        throw Error(Errc::EmptyManifest, path + " has no records");
    }
    return manifest;
}

std::string_view to_string(Branch b) noexcept
{
    switch (b) {
    case Branch::near: return "near";
    case Branch::far: return "far";
    case Branch::mixed: return "mixed";
    case Branch::random: return "random";
    case Branch::groundtruth: return "groundtruth";
    }
    return "unknown";
}

std::optional<Branch> parse_branch(std::string_view name)
{
    for (Branch b : {Branch::near, Branch::far, Branch::mixed, Branch::random, Branch::groundtruth}) {
        if (to_string(b) == name) {
            return b;
        }
    }
    return std::nullopt;
}

void RunConfig::validate(bool check_files) const
{
    if (methods.empty()) {
        config_error("methods must not be empty");
    }
    if (parallelism < 1) {
        config_error("parallelism must be >= 1");
    }
    if (!(tpr > 0.0 && tpr <= 1.0)) {
        config_error("tpr must lie in (0, 1]");
    }
    try {
        scoring.validate();
        envision.validate();
    }
    catch (Error const& e) {
        config_error(e.detail());
    }
    if (id_manifest.empty()) {
        config_error("id_manifest is required");
    }
    if (ood_manifests.empty()) {
        config_error("at least one OOD manifest is required");
    }
    if (cache_dir.empty()) {
        config_error("cache_dir is required");
    }
    if (branch == Branch::groundtruth && outlier_labels.empty()) {
        config_error("groundtruth branch needs outlier_labels");
    }
    if (branch == Branch::random && wordlist.empty()) {
        config_error("random branch needs a wordlist");
    }
    if (!use_mocks) {
        auto require = [this](ProviderKind kind) {
            auto const it = providers.find(kind);
            if (it == providers.end()) {
                config_error(std::string("missing provider '") + std::string(backends::to_string(kind)) + "'");
            }
            try {
                it->second.validate();
            }
            catch (Error const& e) {
                config_error(e.detail());
            }
        };
        require(ProviderKind::embedding);
        if (branch == Branch::near || branch == Branch::far || branch == Branch::mixed) {
            require(ProviderKind::chat);
        }
        if (branch == Branch::far || branch == Branch::mixed) {
            require(ProviderKind::imagegen);
        }
    }
    if (check_files) {
        std::vector<std::string> files{id_manifest};
        files.insert(files.end(), ood_manifests.begin(), ood_manifests.end());
        if (branch == Branch::random) {
            files.push_back(wordlist);
        }
        for (auto const* p : {&prompts.near, &prompts.summarize, &prompts.sketch, &prompts.select, &prompts.elaborate}) {
            if (*p) {
                files.push_back(**p);
            }
        }
        for (auto const& f : files) {
            std::error_code ec;
            if (!fs::is_regular_file(f, ec)) {
                config_error("input file not found: " + f);
            }
        }
    }
}

RunConfig config_from_json(json const& doc, fs::path const& base_dir)
{
    try {
        check_keys(doc,
                   {"branch", "seed", "cache_dir", "output", "parallelism", "methods", "id_manifest", "ood_manifests",
                    "id_labels", "outlier_labels", "outlier_labels_file", "wordlist", "tpr", "mock", "mock_settings",
                    "prompts", "strict_refusals", "scoring", "envision", "providers"},
                   "config");
        RunConfig cfg;
        if (doc.contains("branch")) {
            auto const name = doc.at("branch").get<std::string>();
            auto const b = parse_branch(name);
            if (!b) {
                config_error("unknown branch '" + name + "'");
            }
            cfg.branch = *b;
        }
        read_opt(doc, "seed", cfg.envision.seed);
        read_opt(doc, "cache_dir", cfg.cache_dir);
        read_opt(doc, "output", cfg.output);
        cfg.cache_dir = resolve(base_dir, cfg.cache_dir);
        cfg.output = resolve(base_dir, cfg.output);
        read_opt(doc, "parallelism", cfg.parallelism);
        if (doc.contains("methods")) {
            cfg.methods.clear();
            for (auto const& name : doc.at("methods")) {
                auto const m = parse_method(name.get<std::string>());
                if (!m) {
                    config_error("unknown method '" + name.get<std::string>() + "'");
                }
                if (std::find(cfg.methods.begin(), cfg.methods.end(), *m) == cfg.methods.end()) {
                    cfg.methods.push_back(*m);
                }
            }
        }
        read_opt(doc, "id_manifest", cfg.id_manifest);
        cfg.id_manifest = resolve(base_dir, cfg.id_manifest);
        read_opt(doc, "ood_manifests", cfg.ood_manifests);
        for (auto& p : cfg.ood_manifests) {
            p = resolve(base_dir, p);
        }
        read_opt(doc, "id_labels", cfg.id_labels);
        read_opt(doc, "outlier_labels", cfg.outlier_labels);
        if (doc.contains("outlier_labels_file")) {
            auto const path = resolve(base_dir, doc.at("outlier_labels_file").get<std::string>());
            try {
                auto const words = read_word_lines(path);
                cfg.outlier_labels.insert(cfg.outlier_labels.end(), words.begin(), words.end());
            }
            catch (Error const&) {
                config_error("input file not found: " + path);
            }
        }
        read_opt(doc, "wordlist", cfg.wordlist);
        cfg.wordlist = resolve(base_dir, cfg.wordlist);
        read_opt(doc, "tpr", cfg.tpr);
        read_opt(doc, "mock", cfg.use_mocks);
        read_opt(doc, "strict_refusals", cfg.strict_refusals);
        if (doc.contains("mock_settings")) {
            auto const& ms = doc.at("mock_settings");
            check_keys(ms, {"dim", "image_noise", "chat_fixtures", "fail_generation"}, "mock_settings");
            read_opt(ms, "dim", cfg.mock.dim);
            read_opt(ms, "image_noise", cfg.mock.image_noise);
            read_opt(ms, "fail_generation", cfg.mock.fail_generation);
            if (ms.contains("chat_fixtures")) {
                auto const path = resolve(base_dir, ms.at("chat_fixtures").get<std::string>());
                json fixtures;
                try {
                    fixtures = json::parse(read_file(path));
                }
                catch (Error const&) {
                    config_error("input file not found: " + path);
                }
                for (auto const& f : fixtures) {
                    cfg.mock.chat_fixtures.push_back({f.at("match").get<std::string>(), f.at("reply").get<std::string>()});
                }
            }
        }
        if (doc.contains("prompts")) {
            auto const& p = doc.at("prompts");
            check_keys(p, {"near", "summarize", "sketch", "select", "elaborate"}, "prompts");
            auto read_path = [&](char const* key, std::optional<std::string>& out) {
                if (p.contains(key)) {
                    out = resolve(base_dir, p.at(key).get<std::string>());
                }
            };
            read_path("near", cfg.prompts.near);
            read_path("summarize", cfg.prompts.summarize);
            read_path("sketch", cfg.prompts.sketch);
            read_path("select", cfg.prompts.select);
            read_path("elaborate", cfg.prompts.elaborate);
        }
        if (doc.contains("scoring")) {
            auto const& s = doc.at("scoring");
            check_keys(s, {"beta", "temperature", "logit_scale"}, "scoring");
            read_opt(s, "beta", cfg.scoring.beta);
            read_opt(s, "temperature", cfg.scoring.temperature);
            if (s.contains("logit_scale") && !s.at("logit_scale").is_null()) {
                cfg.scoring.logit_scale = s.at("logit_scale").get<double>();
            }
        }
        if (doc.contains("envision")) {
            auto const& e = doc.at("envision");
            check_keys(e, {"n_o", "m", "n_rounds", "mixing_ratio", "max_attempts", "max_in_flight"}, "envision");
            read_opt(e, "n_o", cfg.envision.n_o);
            read_opt(e, "m", cfg.envision.m);
            read_opt(e, "n_rounds", cfg.envision.n_rounds);
            read_opt(e, "mixing_ratio", cfg.envision.mixing_ratio);
            read_opt(e, "max_attempts", cfg.envision.max_attempts);
        }
        if (doc.contains("providers")) {
            auto const& p = doc.at("providers");
            check_keys(p, {"embedding", "chat", "imagegen"}, "providers");
            for (ProviderKind kind : {ProviderKind::embedding, ProviderKind::chat, ProviderKind::imagegen}) {
                std::string const key(backends::to_string(kind));
                if (p.contains(key)) {
                    cfg.providers[kind] = descriptor_from_json(kind, p.at(key));
                }
            }
        }
        // Near-branch concurrency follows the global worker bound unless set.
        cfg.envision.max_in_flight = std::max(1, cfg.parallelism);
        if (doc.contains("envision") && doc.at("envision").contains("max_in_flight")) {
            cfg.envision.max_in_flight = doc.at("envision").at("max_in_flight").get<int>();
        }
        return cfg;
    }
    catch (json::exception const& e) {
        config_error(std::string("bad config value: ") + e.what());
    }
}

RunConfig load_config(std::string const& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    }
    catch (Error const& e) {
        throw e.with_stage("config");
    }
    catch (json::exception const& e) {
        config_error(path + ": " + e.what());
    }
    return config_from_json(doc, fs::path(path).parent_path());
}

json effective_config_json(RunConfig const& cfg)
{
    json providers = json::object();
    for (auto const& [kind, d] : cfg.providers) {
        providers[std::string(backends::to_string(kind))] = {
            {"endpoint", d.endpoint},
            {"model", d.model_id},
            {"auth_env", d.auth_env},
            {"timeout_ms", d.timeout.count()},
            {"wire_mode", d.wire_mode == backends::WireMode::native ? "native" : "vendor-compatible"},
            {"transport_retries", d.transport_retries},
            {"retry_backoff_ms", d.retry_backoff.count()},
        };
    }
    json prompts = json::object();
    auto add_prompt = [&](char const* key, std::optional<std::string> const& p) {
        prompts[key] = p ? json(*p) : json("builtin");
    };
    add_prompt("near", cfg.prompts.near);
    add_prompt("summarize", cfg.prompts.summarize);
    add_prompt("sketch", cfg.prompts.sketch);
    add_prompt("select", cfg.prompts.select);
    add_prompt("elaborate", cfg.prompts.elaborate);
    json logit_scale = json::object();
    for (auto m : {Method::mmood, Method::mcm, Method::maxlogit, Method::energy}) {
        logit_scale[std::string(to_string(m))] = cfg.scoring.logit_scale_for(m);
    }
    return {
        {"branch", std::string(to_string(cfg.branch))},
        {"seed", cfg.envision.seed},
        {"cache_dir", cfg.cache_dir},
        {"output", cfg.output},
        {"parallelism", cfg.parallelism},
        {"methods", method_names(cfg.methods)},
        {"id_manifest", cfg.id_manifest},
        {"ood_manifests", cfg.ood_manifests},
        {"id_labels", cfg.id_labels},
        {"outlier_labels", cfg.outlier_labels},
        {"wordlist", cfg.wordlist},
        {"tpr", cfg.tpr},
        {"mock", cfg.use_mocks},
        {"mock_settings",
         {{"dim", cfg.mock.dim}, {"image_noise", cfg.mock.image_noise},
          {"chat_fixtures", cfg.mock.chat_fixtures.size()}, {"fail_generation", cfg.mock.fail_generation}}},
        {"strict_refusals", cfg.strict_refusals},
        {"scoring", {{"beta", cfg.scoring.beta}, {"temperature", cfg.scoring.temperature}, {"logit_scale", logit_scale}}},
        {"envision",
         {{"n_o", cfg.envision.n_o},
          {"m", cfg.envision.m},
          {"n_rounds", cfg.envision.n_rounds},
          {"mixing_ratio", cfg.envision.mixing_ratio},
          {"max_attempts", cfg.envision.max_attempts},
          {"max_in_flight", cfg.envision.max_in_flight}}},
        {"prompts", std::move(prompts)},
        {"providers", std::move(providers)},
    };
}

Providers make_providers(RunConfig const& cfg)
{
    Providers p;
    p.cache = std::make_shared<backends::ContentCache>(cfg.cache_dir);
    backends::ChatOptions chat_options;
    chat_options.strict_refusals = cfg.strict_refusals;
    if (cfg.use_mocks) {
        p.mock_embedding = std::make_shared<backends::MockEmbeddingBackend>(backends::MockEmbeddingBackend::Options{
            cfg.mock.dim, cfg.envision.seed, cfg.mock.image_noise, "mock-encoder"});
        p.mock_chat = std::make_shared<backends::MockChatBackend>(
            backends::MockChatBackend::Options{cfg.envision.seed, cfg.mock.chat_fixtures, "mock-mllm"});
        p.mock_imagegen = std::make_shared<backends::MockImageGenBackend>(
            backends::MockImageGenBackend::Options{cfg.envision.seed, cfg.mock.fail_generation, "mock-diffusion"});
        p.encoder = std::make_shared<backends::Encoder>(p.mock_embedding, p.cache);
        p.chat = std::make_shared<backends::ChatClient>(p.mock_chat, chat_options);
        p.imagegen = std::make_shared<backends::ImageGenerator>(p.mock_imagegen, p.cache);
        return p;
    }
    auto const find = [&cfg](ProviderKind kind) -> ProviderDescriptor const* {
        auto const it = cfg.providers.find(kind);
        return it == cfg.providers.end() ? nullptr : &it->second;
    };
    if (auto const* d = find(ProviderKind::embedding)) {
        p.encoder = std::make_shared<backends::Encoder>(std::make_shared<backends::HttpEmbeddingBackend>(*d), p.cache);
    }
    if (auto const* d = find(ProviderKind::chat)) {
        p.chat = std::make_shared<backends::ChatClient>(std::make_shared<backends::HttpChatBackend>(*d), chat_options);
    }
    if (auto const* d = find(ProviderKind::imagegen)) {
        p.imagegen = std::make_shared<backends::ImageGenerator>(std::make_shared<backends::HttpImageGenBackend>(*d), p.cache);
    }
    return p;
}

Datasets load_datasets(RunConfig const& cfg)
{
    Datasets data;
    data.id = parse_manifest(cfg.id_manifest);
    for (auto const& path : cfg.ood_manifests) {
        data.ood.push_back(parse_manifest(path));
    }
    std::set<std::string> declared;
    if (!cfg.id_labels.empty()) {
        data.id_labels = cfg.id_labels;
        for (auto const& l : cfg.id_labels) {
            declared.insert(to_lower(trim(l)));
        }
    }
    bool has_id = false;
    for (auto const& rec : data.id.records) {
        if (rec.split != Split::id) {
            continue;
        }
        has_id = true;
        auto const key = to_lower(trim(rec.class_label));
        if (cfg.id_labels.empty()) {
            if (declared.insert(key).second) {
                data.id_labels.push_back(rec.class_label);
            }
        }
        else if (!declared.contains(key)) {
            throw Error(Errc::ConfigError, "ID record label '" + rec.class_label + "' is not a declared ID label");
        }
    }
    if (!has_id) {
        throw Error(Errc::EmptyManifest, data.id.name + " has no ID records");
    }
    for (auto const& m : data.ood) {
        if (std::none_of(m.records.begin(), m.records.end(), [](auto const& r) { return r.split == Split::ood; })) {
            throw Error(Errc::EmptyManifest, m.name + " has no OOD records");
        }
    }
    return data;
}

std::string render_labels(LabelSet const& labels)
{
    std::string out = "segment\tlabel\n";
    for (auto const& l : labels.id_labels()) {
        out += "id\t" + l + "\n";
    }
    for (auto const& l : labels.outlier_labels()) {
        out += "outlier\t" + l + "\n";
    }
    return out;
}

LabelSet parse_labels(std::string const& text)
{
    std::vector<std::string> id;
    std::vector<std::string> outlier;
    auto const lines = split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        auto const line = trim(lines[n]);
        if (line.empty() || line.front() == '#' || line == "segment\tlabel") {
            continue;
        }
        auto const tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(Errc::ParseError, "labels line " + std::to_string(n + 1) + ": expected '<segment>\\t<label>'");
        }
        auto const segment = line.substr(0, tab);
        auto label = trim(std::string_view(line).substr(tab + 1));
        if (segment == "id") {
            id.push_back(std::move(label));
        }
        else if (segment == "outlier") {
            outlier.push_back(std::move(label));
        }
        else {
            throw Error(Errc::ParseError, "labels line " + std::to_string(n + 1) + ": unknown segment '" + segment + "'");
        }
    }
    return LabelSet(std::move(id), std::move(outlier));
}

ImageEmbeddings embed_dataset_images(Datasets const& data, Providers& providers, int parallelism)
{
    std::vector<ImageRef> refs;
    std::set<ImageRef> seen;
    auto collect = [&](DatasetManifest const& m) {
        for (auto const& r : m.records) {
            if (seen.insert(r.image_ref).second) {
                refs.push_back(r.image_ref);
            }
        }
    };
    collect(data.id);
    for (auto const& m : data.ood) {
        collect(m);
    }
    std::size_t const batches = (refs.size() + kEmbedBatch - 1) / kEmbedBatch;
    std::vector<std::vector<Embedding>> results(batches);
    parallel_for(batches, static_cast<std::size_t>(parallelism), [&](std::size_t b) {
        auto const begin = b * kEmbedBatch;
        auto const end = std::min(refs.size(), begin + kEmbedBatch);
        results[b] = providers.encoder->embed_image(std::span(refs).subspan(begin, end - begin));
    });
    ImageEmbeddings out;
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t j = 0; j < results[b].size(); ++j) {
            out.emplace(refs[b * kEmbedBatch + j], std::move(results[b][j]));
        }
    }
    return out;
}

EnvisionOutcome envision_labels(RunConfig const& cfg, Datasets const& data, Providers& providers,
                                ImageEmbeddings const& images, StageCalls& calls)
{
    auto const& ids = data.id_labels;
    int const k = static_cast<int>(ids.size());
    EnvisionConfig env = cfg.envision;
    env.big_l = env.n_o * k;
    auto const prompts = load_prompts(cfg.prompts);

    auto const chat_calls = [&providers] { return providers.chat ? providers.chat->calls() : std::size_t{0}; };

    EnvisionOutcome out{LabelSet(ids, {}), {}, {}, {}, {}, {}};
    auto run_near = [&] {
        std::vector<NearQuery> queries;
        for (auto const& label : ids) {
            ClassImageSet set;
            set.class_label = label;
            for (auto const& rec : data.id.records) {
                if (rec.split == Split::id && iequals(trim(rec.class_label), trim(label))) {
                    set.image_refs.push_back(rec.image_ref);
                    set.embeddings.push_back(images.at(rec.image_ref));
                }
            }
            queries.push_back({label, representative_image(set)});
        }
        auto const before = chat_calls();
        out.near_raw = near_envision_all(queries, env, *providers.chat, prompts.near);
        calls.near_chat += chat_calls() - before;
    };
    auto run_far = [&] {
        if (env.m > k) {
            throw Error(Errc::ConfigError, "m = " + std::to_string(env.m) + " exceeds K = " + std::to_string(k));
        }
        auto before = chat_calls();
        out.primary_categories =
            summarize_primary_categories(ids, env.m, *providers.chat, prompts.summarize, env.max_attempts);
        calls.summarize_chat += chat_calls() - before;
        before = chat_calls();
        auto const gen_before = providers.imagegen->calls();
        auto far = far_envision(out.primary_categories, env, *providers.chat, *providers.imagegen,
                                providers.encoder.get(), prompts);
        calls.far_chat += chat_calls() - before;
        calls.generate += providers.imagegen->calls() - gen_before;
        out.far_raw = std::move(far.labels);
        out.far_rounds = std::move(far.rounds);
    };

    std::vector<std::string> outliers;
    switch (cfg.branch) {
    case Branch::near:
        run_near();
        outliers = postprocess_labels(out.near_raw, ids, env.big_l);
        break;
    case Branch::far:
        run_far();
        outliers = postprocess_labels(out.far_raw, ids, env.big_l);
        break;
    case Branch::mixed:
        run_near();
        run_far();
        outliers = mix_label_sets(postprocess_labels(out.near_raw, ids, env.big_l),
                                  postprocess_labels(out.far_raw, ids, env.big_l), env.mixing_ratio, env.big_l);
        break;
    case Branch::random: {
        std::set<std::string> id_keys;
        for (auto const& l : ids) {
            id_keys.insert(to_lower(trim(l)));
        }
        std::vector<std::string> words;
        for (auto const& w : read_word_lines(cfg.wordlist)) {
            if (!id_keys.contains(to_lower(w))) {
                words.push_back(w);
            }
        }
        outliers = postprocess_labels(random_label_source(words, env.big_l, env.seed), ids, env.big_l);
        break;
    }
    case Branch::groundtruth:
        env.big_l = std::max<int>(1, static_cast<int>(cfg.outlier_labels.size()));
        outliers = postprocess_labels(cfg.outlier_labels, ids, env.big_l);
        break;
    }
    if (outliers.size() < static_cast<std::size_t>(env.big_l)) {
        out.warnings.push_back("outlier label shortfall: " + std::to_string(outliers.size()) + " of " +
                               std::to_string(env.big_l));
    }
    out.labels = LabelSet(ids, std::move(outliers));
    return out;
}

ScoreTable score_datasets(RunConfig const& cfg, Datasets const& data, LabelSet const& labels,
                          ImageEmbeddings const& images, std::vector<Embedding> const& label_embeddings)
{
    ScoreTable table;
    table.id_dataset = data.id.name;
    table.methods = method_names(cfg.methods);
    auto const k = labels.id_count();
    auto const l = labels.outlier_count();

    auto score_split = [&](std::string name, DatasetManifest const& m, Split split) {
        ScoredSplit s;
        s.name = std::move(name);
        for (auto const& r : m.records) {
            if (r.split == split) {
                s.refs.push_back(r.image_ref);
            }
        }
        std::vector<std::vector<double>> rows(s.refs.size());
        parallel_for(s.refs.size(), static_cast<std::size_t>(cfg.parallelism), [&](std::size_t i) {
            auto const sv = similarity_vector(images.at(s.refs[i]), label_embeddings, k, l);
            for (auto method : cfg.methods) {
                rows[i].push_back(score(method, sv, cfg.scoring));
            }
        });
        for (std::size_t j = 0; j < cfg.methods.size(); ++j) {
            auto& column = s.scores[table.methods[j]];
            for (auto const& row : rows) {
                column.push_back(row[j]);
            }
        }
        return s;
    };
    table.id = score_split(data.id.name, data.id, Split::id);
    for (auto const& m : data.ood) {
        table.ood.push_back(score_split(m.name, m, Split::ood));
    }
    return table;
}

EvalReport evaluate(ScoreTable const& table, double tpr)
{
    EvalReport report;
    for (auto const& method : table.methods) {
        for (auto const& split : table.ood) {
            ScoreSample const sample{table.id.scores.at(method), split.scores.at(method)};
            report.rows.push_back({table.id_dataset, split.name, method, fpr_at_tpr(sample, tpr), auroc(sample)});
        }
    }
    compute_averages(report);
    return report;
}

std::map<std::string, double> thresholds(ScoreTable const& table, double tpr)
{
    std::map<std::string, double> out;
    for (auto const& method : table.methods) {
        out[method] = calibrate_threshold(table.id.scores.at(method), tpr);
    }
    return out;
}

json score_table_json(ScoreTable const& table, double tpr)
{
    json ood = json::array();
    for (auto const& s : table.ood) {
        ood.push_back(split_json(s));
    }
    return {
        {"id_dataset", table.id_dataset},
        {"methods", table.methods},
        {"tpr", tpr},
        {"thresholds", thresholds(table, tpr)},
        {"id", split_json(table.id)},
        {"ood", std::move(ood)},
    };
}

ScoreTable score_table_from_json(json const& doc)
{
    try {
        ScoreTable t;
        t.id_dataset = doc.at("id_dataset").get<std::string>();
        t.methods = doc.at("methods").get<std::vector<std::string>>();
        t.id = split_from_json(doc.at("id"));
        for (auto const& s : doc.at("ood")) {
            t.ood.push_back(split_from_json(s));
        }
        for (auto const& m : t.methods) {
            if (!t.id.scores.contains(m) ||
                std::any_of(t.ood.begin(), t.ood.end(), [&m](auto const& s) { return !s.scores.contains(m); })) {
                throw Error(Errc::ParseError, "scores missing for method '" + m + "'");
            }
        }
        return t;
    }
    catch (json::exception const& e) {
        throw Error(Errc::ParseError, std::string("scores JSON: ") + e.what());
    }
}

void emit_report(EvalReport const& report, fs::path const& dir)
{
    if (report.rows.empty()) {
        throw Error(Errc::PreconditionViolation, "refusing to emit an empty report");
    }
    write_file_atomic((dir / "report.tsv").string(), render_tsv(report));
    write_file_atomic((dir / "report.json").string(), render_json(report));
}

RunResult run_experiment(RunConfig const& cfg, Logger log)
{
    in_stage("config", [&] {
        cfg.validate(true);
        return 0;
    });
    auto providers = in_stage("config", [&] { return make_providers(cfg); });
    return run_experiment(cfg, providers, std::move(log));
}

RunResult run_experiment(RunConfig const& cfg, Providers& providers, Logger log)
{
    auto const started = std::chrono::steady_clock::now();
    auto say = [&log](std::string const& msg) {
        if (log) {
            log(msg);
        }
    };
    in_stage("config", [&] {
        cfg.validate(true);
        return 0;
    });
    auto const data = in_stage("manifest", [&] { return load_datasets(cfg); });
    say("loaded " + std::to_string(data.id_labels.size()) + " ID classes and " + std::to_string(data.ood.size()) +
        " OOD manifests");

    auto const items_before = providers.encoder->backend_items();
    auto const images = in_stage("embed", [&] { return embed_dataset_images(data, providers, cfg.parallelism); });

    RunResult result{{}, LabelSet(data.id_labels, {}), {}, {}, {}};
    auto outcome = in_stage("envision", [&] { return envision_labels(cfg, data, providers, images, result.calls); });
    for (auto const& w : outcome.warnings) {
        say("warning: " + w);
    }
    say("envisioned " + std::to_string(outcome.labels.outlier_count()) + " outlier labels");

    auto const label_embeddings = in_stage("embed", [&] {
        std::vector<std::string> texts;
        for (auto const& l : outcome.labels.all()) {
            texts.push_back(label_prompt(l));
        }
        return providers.encoder->embed_text(texts);
    });
    result.calls.embedding_items = providers.encoder->backend_items() - items_before;

    auto const table = in_stage("score", [&] { return score_datasets(cfg, data, outcome.labels, images, label_embeddings); });
    result.report = in_stage("evaluate", [&] { return evaluate(table, cfg.tpr); });

    in_stage("report", [&] {
        fs::path const dir(cfg.output);
        fs::create_directories(dir);
        emit_report(result.report, dir);
        write_file_atomic((dir / "labels.tsv").string(), render_labels(outcome.labels));
        write_file_atomic((dir / "scores.json").string(), score_table_json(table, cfg.tpr).dump(2) + "\n");
        write_file_atomic((dir / "effective_config.json").string(), effective_config_json(cfg).dump(2) + "\n");
        json rounds = json::array();
        for (auto const& r : outcome.far_rounds) {
            rounds.push_back({{"sketch", r.sketch},
                              {"representative", r.representative},
                              {"representative_from_fallback", r.representative_from_fallback},
                              {"generated_image", fs::path(r.generated_image).filename().string()},
                              {"elaborated", r.elaborated}});
        }
        json trace{{"near_raw", outcome.near_raw},
                   {"primary_categories", outcome.primary_categories},
                   {"far_rounds", std::move(rounds)},
                   {"far_raw", outcome.far_raw},
                   {"warnings", outcome.warnings}};
        write_file_atomic((dir / "envision_trace.json").string(), trace.dump(2) + "\n");
        return 0;
    });

    result.labels = std::move(outcome.labels);
    result.warnings = std::move(outcome.warnings);
    result.wall_clock =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    in_stage("report", [&] {
        json stats{{"wall_clock_ms", result.wall_clock.count()},
                   {"calls",
                    {{"near_chat", result.calls.near_chat},
                     {"summarize_chat", result.calls.summarize_chat},
                     {"far_chat", result.calls.far_chat},
                     {"generate", result.calls.generate},
                     {"embedding_items", result.calls.embedding_items}}}};
        write_file_atomic((fs::path(cfg.output) / "run_stats.json").string(), stats.dump(2) + "\n");
        return 0;
    });
    say("report written to " + cfg.output);
    return result;
}

} // namespace mmood
