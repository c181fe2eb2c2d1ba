#pragma once

#include "mmood/embedding.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmood {

/// ID labels first, then envisioned outlier labels. Comparison for
/// uniqueness is case-insensitive after trimming.
class LabelSet {
public:
    LabelSet(std::vector<std::string> id_labels, std::vector<std::string> outlier_labels);

    [[nodiscard]] std::vector<std::string> const& id_labels() const noexcept { return id_; }
    [[nodiscard]] std::vector<std::string> const& outlier_labels() const noexcept { return outlier_; }
    [[nodiscard]] std::size_t id_count() const noexcept { return id_.size(); }
    [[nodiscard]] std::size_t outlier_count() const noexcept { return outlier_.size(); }

    /// All labels in scoring order.
    [[nodiscard]] std::vector<std::string> all() const;

private:
    std::vector<std::string> id_;
    std::vector<std::string> outlier_;
};

/// Cosine similarities of one image against K ID labels then L outlier labels.
struct ScoreVector {
    std::vector<double> values;
    std::size_t id_count = 0;

    [[nodiscard]] std::size_t outlier_count() const noexcept { return values.size() - id_count; }
    [[nodiscard]] std::span<double const> id() const { return std::span(values).first(id_count); }
    [[nodiscard]] std::span<double const> outlier() const { return std::span(values).subspan(id_count); }
};

enum class Method { mmood, mcm, maxlogit, energy };

[[nodiscard]] std::string_view to_string(Method m) noexcept;
[[nodiscard]] std::optional<Method> parse_method(std::string_view name);

struct ScoringConfig {
    double beta = 0.25;
    double temperature = 1.0;
    /// Unset means the per-method default: 1 for mmood/mcm, 100 for
    /// maxlogit/energy.
    std::optional<double> logit_scale;

    [[nodiscard]] double logit_scale_for(Method m) const;

    /// Throws InvalidConfig.
    void validate() const;
};

[[nodiscard]] ScoreVector similarity_vector(Embedding const& image, std::span<Embedding const> labels,
                                            std::size_t id_count, std::size_t outlier_count);

/// max ID softmax share minus beta times max outlier softmax share, the
/// softmax running over all K+L entries. With no outliers it is the MCM
/// score.
[[nodiscard]] double mmood_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg);
[[nodiscard]] double mcm_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg);
[[nodiscard]] double maxlogit_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg);
[[nodiscard]] double energy_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg);

[[nodiscard]] double score(Method m, ScoreVector const& s, ScoringConfig const& cfg);

} // namespace mmood
