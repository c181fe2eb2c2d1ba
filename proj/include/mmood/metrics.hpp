#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmood {

struct ScoreSample {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
};

enum class Decision { id, ood };

inline constexpr double kDefaultTpr = 0.95;

/// Threshold accepting the top ceil(tpr * n) ID scores: the k-th largest
/// ID score. Throws EmptyScores, InvalidTpr, NonFiniteInput.
[[nodiscard]] double calibrate_threshold(std::span<double const> id_scores, double tpr = kDefaultTpr);

/// ID iff score >= theta.
[[nodiscard]] Decision detect(double score, double theta);

/// Fraction of OOD scores accepted (score >= theta) at the threshold
/// calibrated on the ID scores.
[[nodiscard]] double fpr_at_tpr(ScoreSample const& sample, double tpr = kDefaultTpr);

/// Mann-Whitney AUROC, ties weighted 0.5. O((n + m) log m), exact.
[[nodiscard]] double auroc(ScoreSample const& sample);

struct ReportRow {
    std::string id_dataset;
    std::string ood_dataset;
    std::string method;
    double fpr95 = 0.0;
    double auroc = 0.0;

    friend bool operator==(ReportRow const&, ReportRow const&) = default;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    /// One row per method, ood_dataset "Average"; see `compute_averages`.
    std::vector<ReportRow> averages;
};

inline constexpr char const* kAverageLabel = "Average";

/// Fills `averages` with per-method means over `rows`, methods in first
/// appearance order.
void compute_averages(EvalReport& report);

/// Percentage with two decimals, e.g. 0.0143 -> "1.43".
[[nodiscard]] std::string format_pct(double fraction);

/// Tab-separated report: header, data rows, then the average block.
[[nodiscard]] std::string render_tsv(EvalReport const& report);
[[nodiscard]] std::string render_json(EvalReport const& report);
[[nodiscard]] EvalReport parse_report_json(std::string const& text);

} // namespace mmood
