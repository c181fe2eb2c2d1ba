#pragma once

#include "mmood/backends/provider.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmood {

/// Prompt body with `{class_info}` / `{envision_nums}` placeholders.
class PromptTemplate {
public:
    /// Throws ConfigError when the body names a placeholder outside the
    /// declared set.
    PromptTemplate(std::string name, std::string body, bool attaches_image);

    /// Reads a UTF-8 template file.
    static PromptTemplate load(std::string name, std::string const& path, bool attaches_image);

    [[nodiscard]] std::string const& name() const noexcept { return name_; }
    [[nodiscard]] std::string const& body() const noexcept { return body_; }
    [[nodiscard]] bool attaches_image() const noexcept { return attaches_image_; }
    /// Placeholders present in the body, in first-appearance order.
    [[nodiscard]] std::vector<std::string> const& placeholders() const noexcept { return placeholders_; }

private:
    std::string name_;
    std::string body_;
    bool attaches_image_;
    std::vector<std::string> placeholders_;
};

inline constexpr char const* kClassInfo = "class_info";
inline constexpr char const* kEnvisionNums = "envision_nums";

/// Literal substitution of every `{name}`. Throws UnboundPlaceholder.
[[nodiscard]] std::string render_prompt(PromptTemplate const& tpl, std::map<std::string, std::string> const& bindings);

/// Labels from lines starting with "- " or "<digits>. ", with surrounding
/// brackets, quotes and whitespace stripped. In strict mode an empty result
/// raises EmptyResponse.
[[nodiscard]] std::vector<std::string> parse_label_response(std::string const& text, bool strict = false);

struct PromptSet {
    PromptTemplate near;
    PromptTemplate summarize;
    PromptTemplate sketch;
    PromptTemplate select;
    PromptTemplate elaborate;

    static PromptSet defaults();
};

struct EnvisionConfig {
    int n_o = 3;
    /// Outlier label budget L; the harness sets n_o * K for the near branch.
    int big_l = 3;
    int m = 1;
    int n_rounds = 1;
    double mixing_ratio = 0.5;
    std::uint64_t seed = 0;
    /// Identical-prompt attempts per chat step before giving up.
    int max_attempts = 3;
    /// Concurrent near-branch conversations.
    int max_in_flight = 4;

    /// Throws InvalidConfig.
    void validate() const;
};

/// One near-branch query: ID label plus its representative image.
[[nodiscard]] std::vector<std::string> near_envision(std::string const& id_label, ImageRef const& rep_image, int n_o,
                                                     backends::ChatClient& chat, PromptTemplate const& tpl,
                                                     int max_attempts = 3);

struct NearQuery {
    std::string id_label;
    ImageRef rep_image;
};

/// Runs `near_envision` for every class (bounded concurrency) and
/// concatenates the results in class order.
[[nodiscard]] std::vector<std::string> near_envision_all(std::vector<NearQuery> const& queries,
                                                         EnvisionConfig const& cfg, backends::ChatClient& chat,
                                                         PromptTemplate const& tpl);

[[nodiscard]] std::vector<std::string> summarize_primary_categories(std::vector<std::string> const& id_labels, int m,
                                                                    backends::ChatClient& chat,
                                                                    PromptTemplate const& tpl, int max_attempts = 3);

/// Per-round record of the sketch-generate-elaborate loop.
struct FarRound {
    std::vector<std::string> sketch;
    std::string representative;
    bool representative_from_fallback = false;
    ImageRef generated_image;
    std::vector<std::string> elaborated;
};

struct FarResult {
    std::vector<std::string> labels;
    std::vector<FarRound> rounds;
};

/// Sketch, select, generate, elaborate for `cfg.n_rounds` rounds; each round
/// is one conversation and its elaborated labels are unioned into the
/// result. `encoder` backs the dissimilar-label fallback when the selection
/// reply cannot be parsed.
[[nodiscard]] FarResult far_envision(std::vector<std::string> const& primary_categories, EnvisionConfig const& cfg,
                                     backends::ChatClient& chat, backends::ImageGenerator& gen,
                                     backends::Encoder* encoder, PromptSet const& prompts);

/// Trim, lowercase, drop empties, duplicates and ID labels (case-
/// insensitive), then keep the first `big_l`.
[[nodiscard]] std::vector<std::string> postprocess_labels(std::vector<std::string> const& raw,
                                                          std::vector<std::string> const& id_labels, int big_l);

/// First ceil(ratio * big_l) near labels, then far labels not already taken.
[[nodiscard]] std::vector<std::string> mix_label_sets(std::vector<std::string> const& near,
                                                      std::vector<std::string> const& far, double ratio, int big_l);

/// `big_l` distinct words sampled without replacement (seeded
/// mt19937_64, partial Fisher-Yates). Throws WordlistTooSmall.
[[nodiscard]] std::vector<std::string> random_label_source(std::vector<std::string> const& wordlist, int big_l,
                                                           std::uint64_t seed);

/// "a photo of a <label>" with the label lowercased.
[[nodiscard]] std::string label_prompt(std::string const& label);

} // namespace mmood
