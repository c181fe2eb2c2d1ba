#include "mmood/backends/mock.hpp"
#include "mmood/envision.hpp"
#include "mmood/error.hpp"
#include "mmood/text.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

namespace mmood {
namespace {

namespace fs = std::filesystem;
using backends::ChatClient;
using backends::ChatFixture;
using backends::MockChatBackend;

std::string const kHuskyAnswer =
    "A: There are 3 classes similar to [husky dog], and they are from broader and different domains than "
    "[husky dog]:\n\n- gray wolf\n\n- black stone\n\n- red panda";
std::string const kBasketballAnswer =
    "A: There are 3 classes similar to [basketball], and they are from broader and different domains than "
    "[basketball]:\n\n- balloons\n\n- blowfish\n\n- hat";
std::string const kWaterJugAnswer =
    "A: There are 3 classes similar to [water jug], and they are from broader and different domains than "
    "[water jug]:\n\n- trumpets\n\n- helmets\n\n- rucksacks";

struct ChatRig {
    std::shared_ptr<MockChatBackend> backend;
    ChatClient client;

    explicit ChatRig(std::vector<ChatFixture> fixtures = {}, std::uint64_t seed = 0)
    : backend(std::make_shared<MockChatBackend>(MockChatBackend::Options{seed, std::move(fixtures), "mock"}))
    , client(backend)
    {
    }

    ChatRig(std::initializer_list<ChatFixture> fixtures)
    : ChatRig(std::vector<ChatFixture>(fixtures))
    {
    }
};

fs::path temp_dir(std::string const& name)
{
    auto dir = fs::temp_directory_path() / ("mmood_envision_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(PromptTemplate, RendersNearTemplate)
{
    auto const prompts = PromptSet::defaults();
    auto const text = render_prompt(prompts.near, {{"class_info", "husky dog"}, {"envision_nums", "3"}});
    EXPECT_NE(text.find("Given the image category [husky dog]"), std::string::npos);
    EXPECT_NE(text.find("A: There are 3 classes similar to [husky dog]"), std::string::npos);
    EXPECT_EQ(text.find('{'), std::string::npos);
    EXPECT_EQ(text.find('}'), std::string::npos);
    EXPECT_TRUE(prompts.near.attaches_image());
}

TEST(PromptTemplate, NoPlaceholdersIsIdentity)
{
    PromptTemplate const tpl("plain", "just text", false);
    EXPECT_EQ(render_prompt(tpl, {}), "just text");
}

TEST(PromptTemplate, UnboundPlaceholder)
{
    PromptTemplate const tpl("t", "[{class_info}] x {envision_nums}", false);
    try {
        (void)render_prompt(tpl, {{"class_info", "a"}});
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::UnboundPlaceholder);
    }
}

TEST(PromptTemplate, RejectsUndeclaredPlaceholder)
{
    EXPECT_THROW(PromptTemplate("t", "hello {name}", false), Error);
    // Braces that are not identifiers are left alone.
    PromptTemplate const tpl("t", "json {\"a\": 1} {class_info}", false);
    EXPECT_EQ(render_prompt(tpl, {{"class_info", "x"}}), "json {\"a\": 1} x");
}

TEST(PromptTemplate, SubstitutionIsLiteral)
{
    PromptTemplate const tpl("t", "{class_info}|{class_info}", false);
    EXPECT_EQ(render_prompt(tpl, {{"class_info", "{envision_nums}"}}), "{envision_nums}|{envision_nums}");
}

TEST(PromptTemplate, ShippedFilesMatchBuiltins)
{
    auto const defaults = PromptSet::defaults();
    fs::path const dir = MMOOD_SOURCE_DIR "/templates";
    EXPECT_EQ(read_file((dir / "near.txt").string()), defaults.near.body());
    EXPECT_EQ(read_file((dir / "summarize.txt").string()), defaults.summarize.body());
    EXPECT_EQ(read_file((dir / "sketch.txt").string()), defaults.sketch.body());
    EXPECT_EQ(read_file((dir / "select.txt").string()), defaults.select.body());
    EXPECT_EQ(read_file((dir / "elaborate.txt").string()), defaults.elaborate.body());
}

TEST(ParseLabelResponse, FewShotAnswers)
{
    EXPECT_EQ(parse_label_response(kHuskyAnswer), (std::vector<std::string>{"gray wolf", "black stone", "red panda"}));
    EXPECT_EQ(parse_label_response(kBasketballAnswer), (std::vector<std::string>{"balloons", "blowfish", "hat"}));
    EXPECT_EQ(parse_label_response(kWaterJugAnswer), (std::vector<std::string>{"trumpets", "helmets", "rucksacks"}));
}

TEST(ParseLabelResponse, NumberedAndWrapped)
{
    EXPECT_EQ(parse_label_response("1. balloons\n2. blowfish\n3. hat"),
              (std::vector<std::string>{"balloons", "blowfish", "hat"}));
    EXPECT_EQ(parse_label_response("  - [gray wolf]  \r\n- \"red panda\"\n-   \n- 'koi'"),
              (std::vector<std::string>{"gray wolf", "red panda", "koi"}));
    EXPECT_EQ(parse_label_response("10.   coral reef\n3) nope\n-nope"), (std::vector<std::string>{"coral reef"}));
}

TEST(ParseLabelResponse, RefusalText)
{
    std::string const refusal = "I can't understand the content of the image";
    EXPECT_TRUE(parse_label_response(refusal).empty());
    try {
        (void)parse_label_response(refusal, true);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::EmptyResponse);
    }
}

TEST(ParseLabelResponse, RoundTripsRenderedFewShotBlocks)
{
    auto const text = render_prompt(PromptSet::defaults().near, {{"class_info", "x"}, {"envision_nums", "3"}});
    std::vector<std::vector<std::string>> blocks;
    std::size_t pos = 0;
    while ((pos = text.find("\nA: ", pos)) != std::string::npos) {
        auto const end = text.find("\nQ: ", pos);
        blocks.push_back(parse_label_response(text.substr(pos, end == std::string::npos ? end : end - pos)));
        pos += 4;
    }
    ASSERT_EQ(blocks.size(), 4u);
    EXPECT_EQ(blocks[0], (std::vector<std::string>{"gray wolf", "black stone", "red panda"}));
    EXPECT_EQ(blocks[1], (std::vector<std::string>{"balloons", "blowfish", "hat"}));
    EXPECT_EQ(blocks[2], (std::vector<std::string>{"trumpets", "helmets", "rucksacks"}));
    EXPECT_TRUE(blocks[3].empty());
}

TEST(NearEnvision, FewShotFixture)
{
    ChatRig rig({{"[husky dog]", kHuskyAnswer}, {"[basketball]", kBasketballAnswer}});
    auto const tpl = PromptSet::defaults().near;
    EXPECT_EQ(near_envision("husky dog", "rep.png", 3, rig.client, tpl),
              (std::vector<std::string>{"gray wolf", "black stone", "red panda"}));
    EXPECT_EQ(near_envision("basketball", "rep.png", 3, rig.client, tpl),
              (std::vector<std::string>{"balloons", "blowfish", "hat"}));
    EXPECT_EQ(rig.backend->calls(), 2u);

    auto const requests = rig.backend->requests();
    ASSERT_EQ(requests[0].size(), 1u);
    EXPECT_EQ(requests[0][0].image, std::optional<std::string>("rep.png"));
    EXPECT_NE(requests[0][0].text.find("A: There are 3 classes similar to [husky dog]"), std::string::npos);
}

TEST(NearEnvision, RefusalExhaustsRetries)
{
    ChatRig rig({{"[zebra]", "I can't understand the content of the image"}});
    try {
        (void)near_envision("zebra", "rep.png", 3, rig.client, PromptSet::defaults().near);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::EmptyResponse);
        EXPECT_EQ(e.stage(), "near");
    }
    EXPECT_EQ(rig.backend->calls(), 3u);
}

class FlakyChat : public backends::ChatBackend {
public:
    std::string const& model_id() const override { return id_; }
    std::string complete(std::span<backends::Message const>) override
    {
        return ++calls_ < 3 ? std::string("sorry") : std::string("- koi\n");
    }
    int calls_ = 0;

private:
    std::string id_ = "flaky";
};

TEST(NearEnvision, RetriesUntilParseable)
{
    auto backend = std::make_shared<FlakyChat>();
    ChatClient client(backend);
    EXPECT_EQ(near_envision("goldfish", "r.png", 1, client, PromptSet::defaults().near),
              (std::vector<std::string>{"koi"}));
    EXPECT_EQ(backend->calls_, 3);
}

TEST(NearEnvision, AllClassesOneCallEach)
{
    ChatRig rig;
    EnvisionConfig cfg;
    cfg.n_o = 2;
    cfg.max_in_flight = 3;
    auto const dir = temp_dir("near_all");
    std::vector<NearQuery> queries;
    for (int i = 0; i < 7; ++i) {
        auto const label = "class " + std::to_string(i);
        auto const path = (dir / (std::to_string(i) + ".img")).string();
        write_file_atomic(path, backends::make_mock_image(label, path));
        queries.push_back({label, path});
    }
    auto const labels = near_envision_all(queries, cfg, rig.client, PromptSet::defaults().near);
    EXPECT_EQ(labels.size(), 14u);
    EXPECT_EQ(rig.backend->calls(), 7u);
    // Order follows the queries regardless of scheduling.
    ChatRig serial;
    cfg.max_in_flight = 1;
    EXPECT_EQ(near_envision_all(queries, cfg, serial.client, PromptSet::defaults().near), labels);
}

TEST(SummarizeCategories, FixtureAndIdentity)
{
    std::vector<std::string> const ids{"husky dog", "beagle", "siamese cat"};
    ChatRig rig({{"husky dog, beagle, siamese cat", "- dogs\n- cats\n"}});
    auto const tpl = PromptSet::defaults().summarize;
    EXPECT_EQ(summarize_primary_categories(ids, 2, rig.client, tpl), (std::vector<std::string>{"dogs", "cats"}));
    EXPECT_EQ(rig.backend->calls(), 1u);

    ChatRig identity({{"husky dog, beagle, siamese cat", "- husky dog\n- beagle\n- siamese cat\n"}});
    EXPECT_EQ(summarize_primary_categories(ids, 3, identity.client, tpl), ids);

    try {
        (void)summarize_primary_categories(ids, 0, rig.client, tpl);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::PreconditionViolation);
    }
}

TEST(SummarizeCategories, TooFewAfterRetries)
{
    ChatRig rig({{"a, b, c", "- only one\n"}});
    try {
        (void)summarize_primary_categories({"a", "b", "c"}, 2, rig.client, PromptSet::defaults().summarize);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::CategoryCountMismatch);
    }
    EXPECT_EQ(rig.backend->calls(), 3u);
}

struct FarRig {
    fs::path dir;
    std::shared_ptr<backends::ContentCache> cache;
    std::shared_ptr<backends::MockImageGenBackend> gen_backend;
    backends::ImageGenerator gen;
    ChatRig chat;

    FarRig(std::string const& name, std::vector<ChatFixture> fixtures, bool fail_gen = false)
    : dir(temp_dir(name))
    , cache(std::make_shared<backends::ContentCache>(dir))
    , gen_backend(std::make_shared<backends::MockImageGenBackend>(backends::MockImageGenBackend::Options{0, fail_gen, "sd"}))
    , gen(gen_backend, cache)
    , chat(std::move(fixtures))
    {
    }
};

std::vector<ChatFixture> far_fixtures()
{
    return {
        {"Sketch", "- circuit board\n- coral reef\n- sand dune\n- lighthouse\n"},
        {"most dissimilar", "- circuit board\n"},
        {"attached image", "- circuit board\n- coral reef\n- sand dune\n"},
    };
}

TEST(FarEnvision, FixturePassThrough)
{
    FarRig rig("fixture", far_fixtures());
    EnvisionConfig cfg;
    cfg.big_l = 3;
    auto const result = far_envision({"food dishes"}, cfg, rig.chat.client, rig.gen, nullptr, PromptSet::defaults());
    EXPECT_EQ(result.labels, (std::vector<std::string>{"circuit board", "coral reef", "sand dune"}));
    ASSERT_EQ(result.rounds.size(), 1u);
    EXPECT_EQ(result.rounds[0].representative, "circuit board");
    EXPECT_FALSE(result.rounds[0].representative_from_fallback);
    EXPECT_EQ(rig.chat.backend->calls(), 3u);
    EXPECT_EQ(rig.gen.calls(), 1u);

    // All three steps share one conversation; the elaborate request carries
    // the generated image and the full five-message history before it.
    auto const requests = rig.chat.backend->requests();
    ASSERT_EQ(requests.size(), 3u);
    EXPECT_EQ(requests[0].size(), 1u);
    EXPECT_EQ(requests[1].size(), 3u);
    ASSERT_EQ(requests[2].size(), 5u);
    EXPECT_EQ(requests[2].back().image, std::optional<std::string>(result.rounds[0].generated_image));
    EXPECT_TRUE(read_file(result.rounds[0].generated_image).starts_with("MOCKIMG label=circuit board\n"));
    EXPECT_NE(requests[0][0].text.find("[food dishes]"), std::string::npos);
}

TEST(FarEnvision, RepeatedRoundsUnionIsIdempotent)
{
    FarRig one("rounds1", far_fixtures());
    FarRig two("rounds2", far_fixtures());
    EnvisionConfig cfg;
    cfg.big_l = 3;
    auto const a = far_envision({"food dishes"}, cfg, one.chat.client, one.gen, nullptr, PromptSet::defaults());
    cfg.n_rounds = 2;
    auto const b = far_envision({"food dishes"}, cfg, two.chat.client, two.gen, nullptr, PromptSet::defaults());
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(two.chat.backend->calls(), 6u);
    EXPECT_EQ(two.gen.calls(), 2u);
    EXPECT_EQ(two.gen_backend->calls(), 1u);
}

TEST(FarEnvision, RoundsAccumulate)
{
    FarRig rig("accumulate", {});
    EnvisionConfig cfg;
    cfg.big_l = 6;
    cfg.n_rounds = 3;
    auto const result = far_envision({"pets", "vehicles"}, cfg, rig.chat.client, rig.gen, nullptr, PromptSet::defaults());
    std::set<std::string> so_far;
    std::size_t expected = 0;
    for (auto const& round : result.rounds) {
        EXPECT_EQ(round.elaborated.size(), 2u); // ceil(6 / 3)
        for (auto const& l : round.elaborated) {
            so_far.insert(l);
        }
        expected = so_far.size();
    }
    EXPECT_EQ(result.labels.size(), expected);
    EXPECT_EQ(rig.chat.backend->calls(), 9u);
}

TEST(FarEnvision, GenerationFailureIsTagged)
{
    FarRig rig("genfail", far_fixtures(), true);
    EnvisionConfig cfg;
    try {
        (void)far_envision({"food dishes"}, cfg, rig.chat.client, rig.gen, nullptr, PromptSet::defaults());
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::BackendError);
        EXPECT_EQ(e.stage(), "generate");
    }
}

TEST(FarEnvision, SelectionFallbackUsesEmbeddings)
{
    FarRig rig("fallback", {{"Sketch", "- circuit board\n- coral reef\n"},
                            {"most dissimilar", "hmm, hard to say"},
                            {"attached image", "- sand dune\n"}});
    auto const dir = temp_dir("fallback_cache");
    auto embed_backend = std::make_shared<backends::MockEmbeddingBackend>(backends::MockEmbeddingBackend::Options{});
    backends::Encoder encoder(embed_backend, std::make_shared<backends::ContentCache>(dir));
    EnvisionConfig cfg;
    auto const result = far_envision({"food dishes"}, cfg, rig.chat.client, rig.gen, &encoder, PromptSet::defaults());
    ASSERT_EQ(result.rounds.size(), 1u);
    EXPECT_TRUE(result.rounds[0].representative_from_fallback);

    auto const centre = encoder.embed_text(std::vector<std::string>{"a photo of a food dishes"});
    auto const sketched = encoder.embed_text(std::vector<std::string>{"a photo of a circuit board", "a photo of a coral reef"});
    auto const expected = cosine(sketched[0], centre[0]) <= cosine(sketched[1], centre[0]) ? "circuit board" : "coral reef";
    EXPECT_EQ(result.rounds[0].representative, expected);
    EXPECT_EQ(result.labels, (std::vector<std::string>{"sand dune"}));

    FarRig no_encoder("fallback2", {{"Sketch", "- a\n"}, {"most dissimilar", "?"}});
    EXPECT_THROW((void)far_envision({"x"}, cfg, no_encoder.chat.client, no_encoder.gen, nullptr, PromptSet::defaults()),
                 Error);
}

TEST(PostprocessLabels, Examples)
{
    EXPECT_EQ(postprocess_labels({"Gray Wolf", "gray wolf", "husky dog", "red panda"}, {"husky dog"}, 2),
              (std::vector<std::string>{"gray wolf", "red panda"}));
    EXPECT_TRUE(postprocess_labels({}, {"a"}, 3).empty());
    EXPECT_EQ(postprocess_labels({"a", "b", "c"}, {}, 2), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(postprocess_labels({"  ", " Koi "}, {}, 2), (std::vector<std::string>{"koi"}));
    EXPECT_THROW((void)postprocess_labels({"a"}, {}, 0), Error);
}

TEST(PostprocessLabels, PropertyNoIdsNoDuplicatesBounded)
{
    std::mt19937_64 rng(31);
    std::string const alphabet = "abAB ";
    auto word = [&] {
        std::string w;
        for (std::size_t n = rng() % 4; n > 0; --n) {
            w.push_back(alphabet[rng() % alphabet.size()]);
        }
        return w;
    };
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::string> raw(rng() % 20);
        std::vector<std::string> ids(rng() % 4);
        for (auto& r : raw) {
            r = word();
        }
        for (auto& i : ids) {
            i = word();
        }
        int const big_l = 1 + static_cast<int>(rng() % 10);
        auto const out = postprocess_labels(raw, ids, big_l);
        EXPECT_LE(out.size(), static_cast<std::size_t>(big_l));
        std::set<std::string> seen;
        for (auto const& l : out) {
            EXPECT_FALSE(l.empty());
            EXPECT_TRUE(seen.insert(to_lower(l)).second);
            for (auto const& id : ids) {
                EXPECT_FALSE(iequals(trim(id), l));
            }
        }
    }
}

TEST(MixLabelSets, Examples)
{
    std::vector<std::string> const near{"n1", "n2", "n3", "n4"};
    std::vector<std::string> const far{"f1", "f2", "f3", "f4"};
    EXPECT_EQ(mix_label_sets(near, far, 0.5, 4), (std::vector<std::string>{"n1", "n2", "f1", "f2"}));
    EXPECT_EQ(mix_label_sets(near, far, 1.0, 3), (std::vector<std::string>{"n1", "n2", "n3"}));
    EXPECT_EQ(mix_label_sets({"n1", "n2", "n3"}, {"f1", "f2", "f3"}, 0.5, 3),
              (std::vector<std::string>{"n1", "n2", "f1"}));
    EXPECT_EQ(mix_label_sets({"a", "b"}, {"A", "c", "d"}, 0.5, 4), (std::vector<std::string>{"a", "b", "c", "d"}));
    EXPECT_EQ(mix_label_sets(near, far, 0.0, 2), (std::vector<std::string>{"f1", "f2"}));
    EXPECT_THROW((void)mix_label_sets(near, far, 1.5, 2), Error);
}

TEST(RandomLabelSource, Examples)
{
    auto const all = random_label_source({"a", "b", "c"}, 3, 9);
    EXPECT_EQ(std::set<std::string>(all.begin(), all.end()), (std::set<std::string>{"a", "b", "c"}));
    std::vector<std::string> words;
    for (int i = 0; i < 100; ++i) {
        words.push_back("w" + std::to_string(i));
    }
    EXPECT_EQ(random_label_source(words, 10, 42), random_label_source(words, 10, 42));
    EXPECT_NE(random_label_source(words, 10, 42), random_label_source(words, 10, 43));
    try {
        (void)random_label_source({"a", "b"}, 3, 0);
        FAIL();
    }
    catch (Error const& e) {
        EXPECT_EQ(e.code(), Errc::WordlistTooSmall);
    }
    // Duplicates do not count towards the distinct pool.
    EXPECT_THROW((void)random_label_source({"a", "A", "b"}, 3, 0), Error);
}

TEST(RandomLabelSource, RoughlyUniform)
{
    std::vector<std::string> const words{"a", "b", "c", "d"};
    std::map<std::string, int> first;
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        ++first[random_label_source(words, 1, seed).front()];
    }
    for (auto const& [w, n] : first) {
        EXPECT_NEAR(n, 1000, 150) << w;
    }
}

TEST(EnvisionConfig, Defaults)
{
    EnvisionConfig const cfg;
    EXPECT_EQ(cfg.n_rounds, 1);
    EXPECT_EQ(cfg.mixing_ratio, 0.5);
    EXPECT_EQ(cfg.max_attempts, 3);
    EnvisionConfig bad;
    bad.mixing_ratio = 2.0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(LabelPrompt, LowercasesLabel)
{
    EXPECT_EQ(label_prompt(" Husky Dog "), "a photo of a husky dog");
}

} // namespace
} // namespace mmood
