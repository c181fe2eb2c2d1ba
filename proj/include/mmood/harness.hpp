#pragma once

#include "mmood/backends/mock.hpp"
#include "mmood/backends/provider.hpp"
#include "mmood/envision.hpp"
#include "mmood/metrics.hpp"
#include "mmood/scoring.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mmood {

enum class Split { id, ood };

struct ManifestRecord {
    Split split = Split::id;
    std::string class_label;
    ImageRef image_ref;
};

struct DatasetManifest {
    std::string name;
    std::vector<ManifestRecord> records;
};

/// Tab-separated `<split>\t<class_label>\t<image_ref>` lines; '#' comments
/// and blank lines are skipped, split names are case-insensitive. Relative
/// image refs resolve against the manifest's directory. The name is the
/// file stem. Throws ParseError (with line number) or EmptyManifest.
[[nodiscard]] DatasetManifest parse_manifest(std::string const& path);

enum class Branch { near, far, mixed, random, groundtruth };

[[nodiscard]] std::string_view to_string(Branch b) noexcept;
[[nodiscard]] std::optional<Branch> parse_branch(std::string_view name);

struct MockSettings {
    std::size_t dim = 64;
    double image_noise = 0.6;
    std::vector<backends::ChatFixture> chat_fixtures;
    /// Raise an error on every image generation request.
    bool fail_generation = false;
};

struct PromptPaths {
    std::optional<std::string> near;
    std::optional<std::string> summarize;
    std::optional<std::string> sketch;
    std::optional<std::string> select;
    std::optional<std::string> elaborate;
};

struct RunConfig {
    Branch branch = Branch::near;
    ScoringConfig scoring;
    EnvisionConfig envision;
    std::map<backends::ProviderKind, backends::ProviderDescriptor> providers;
    std::vector<Method> methods{Method::mmood, Method::mcm, Method::maxlogit, Method::energy};
    std::string cache_dir = ".mmood-cache";
    std::string id_manifest;
    std::vector<std::string> ood_manifests;
    /// Optional explicit ID label order; defaults to first appearance in the
    /// ID manifest.
    std::vector<std::string> id_labels;
    /// User-supplied outlier labels for the groundtruth branch.
    std::vector<std::string> outlier_labels;
    /// One word per line, for the random branch.
    std::string wordlist;
    std::string output = "mmood-out";
    int parallelism = 4;
    double tpr = kDefaultTpr;
    bool use_mocks = false;
    MockSettings mock;
    PromptPaths prompts;
    bool strict_refusals = false;

    /// Throws ConfigError. With `check_files`, also verifies that every
    /// referenced input file exists.
    void validate(bool check_files) const;
};

/// Parses a JSON config document. Relative paths resolve against
/// `base_dir`. Unknown keys raise ConfigError.
[[nodiscard]] RunConfig config_from_json(nlohmann::json const& doc, std::filesystem::path const& base_dir);
[[nodiscard]] RunConfig load_config(std::string const& path);
/// Every effective setting, defaults included.
[[nodiscard]] nlohmann::json effective_config_json(RunConfig const& cfg);

struct Providers {
    std::shared_ptr<backends::ContentCache> cache;
    std::shared_ptr<backends::Encoder> encoder;
    std::shared_ptr<backends::ChatClient> chat;
    std::shared_ptr<backends::ImageGenerator> imagegen;
    /// Set only when mocks are in use.
    std::shared_ptr<backends::MockEmbeddingBackend> mock_embedding;
    std::shared_ptr<backends::MockChatBackend> mock_chat;
    std::shared_ptr<backends::MockImageGenBackend> mock_imagegen;
};

[[nodiscard]] Providers make_providers(RunConfig const& cfg);

struct Datasets {
    DatasetManifest id;
    std::vector<DatasetManifest> ood;
    std::vector<std::string> id_labels;
};

[[nodiscard]] Datasets load_datasets(RunConfig const& cfg);

/// Labels file: header "segment\tlabel", then "id\t<label>" and
/// "outlier\t<label>" rows.
[[nodiscard]] std::string render_labels(LabelSet const& labels);
[[nodiscard]] LabelSet parse_labels(std::string const& text);

struct StageCalls {
    std::size_t near_chat = 0;
    std::size_t summarize_chat = 0;
    std::size_t far_chat = 0;
    std::size_t generate = 0;
    std::size_t embedding_items = 0;
};

struct EnvisionOutcome {
    LabelSet labels;
    std::vector<std::string> near_raw;
    std::vector<std::string> far_raw;
    std::vector<std::string> primary_categories;
    std::vector<FarRound> far_rounds;
    std::vector<std::string> warnings;
};

using ImageEmbeddings = std::map<ImageRef, Embedding>;

/// Embeds every distinct image referenced by the datasets.
[[nodiscard]] ImageEmbeddings embed_dataset_images(Datasets const& data, Providers& providers, int parallelism);

[[nodiscard]] EnvisionOutcome envision_labels(RunConfig const& cfg, Datasets const& data, Providers& providers,
                                              ImageEmbeddings const& images, StageCalls& calls);

/// Scores per method for one dataset split, parallel to `refs`.
struct ScoredSplit {
    std::string name;
    std::vector<ImageRef> refs;
    std::map<std::string, std::vector<double>> scores;
};

struct ScoreTable {
    std::string id_dataset;
    std::vector<std::string> methods;
    ScoredSplit id;
    std::vector<ScoredSplit> ood;
};

[[nodiscard]] ScoreTable score_datasets(RunConfig const& cfg, Datasets const& data, LabelSet const& labels,
                                        ImageEmbeddings const& images, std::vector<Embedding> const& label_embeddings);

[[nodiscard]] EvalReport evaluate(ScoreTable const& table, double tpr);
/// ID-score threshold per method at `tpr`.
[[nodiscard]] std::map<std::string, double> thresholds(ScoreTable const& table, double tpr);

[[nodiscard]] nlohmann::json score_table_json(ScoreTable const& table, double tpr);
[[nodiscard]] ScoreTable score_table_from_json(nlohmann::json const& doc);

/// Writes `report.tsv` and `report.json` into `dir`. Throws
/// PreconditionViolation on an empty report, IOError on write failure.
void emit_report(EvalReport const& report, std::filesystem::path const& dir);

struct RunResult {
    EvalReport report;
    LabelSet labels;
    StageCalls calls;
    std::vector<std::string> warnings;
    std::chrono::milliseconds wall_clock{0};
};

using Logger = std::function<void(std::string const&)>;

/// Full pipeline: embed images, envision, postprocess, embed labels, score,
/// evaluate, write artifacts to `cfg.output`. Errors carry a stage tag.
[[nodiscard]] RunResult run_experiment(RunConfig const& cfg, Logger log = {});
/// As above against caller-supplied providers.
[[nodiscard]] RunResult run_experiment(RunConfig const& cfg, Providers& providers, Logger log = {});

} // namespace mmood
