#include "mmood/metrics.hpp"

#include "mmood/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

namespace mmood {

namespace {

void require_finite(std::span<double const> xs, char const* what)
{
    for (double x : xs) {
        if (!std::isfinite(x)) {
            throw Error(Errc::NonFiniteInput, std::string("non-finite value in ") + what);
        }
    }
}

void require_sample(ScoreSample const& sample)
{
    if (sample.id_scores.empty() || sample.ood_scores.empty()) {
        throw Error(Errc::EmptyScores, "both ID and OOD scores are required");
    }
    require_finite(sample.id_scores, "ID scores");
    require_finite(sample.ood_scores, "OOD scores");
}

double round_pct(double fraction)
{
    return std::round(fraction * 10000.0) / 100.0;
}

nlohmann::json row_to_json(ReportRow const& r)
{
    return {
        {"id_dataset", r.id_dataset},
        {"ood_dataset", r.ood_dataset},
        {"method", r.method},
        {"fpr95_pct", round_pct(r.fpr95)},
        {"auroc_pct", round_pct(r.auroc)},
        {"fpr95", r.fpr95},
        {"auroc", r.auroc},
    };
}

ReportRow row_from_json(nlohmann::json const& j)
{
    return {
        j.at("id_dataset").get<std::string>(),
        j.at("ood_dataset").get<std::string>(),
        j.at("method").get<std::string>(),
        j.at("fpr95").get<double>(),
        j.at("auroc").get<double>(),
    };
}

} // namespace

double calibrate_threshold(std::span<double const> id_scores, double tpr)
{
    if (id_scores.empty()) {
        throw Error(Errc::EmptyScores, "no ID scores to calibrate on");
    }
    if (!(tpr > 0.0 && tpr <= 1.0)) {
        throw Error(Errc::InvalidTpr, "tpr must lie in (0, 1]");
    }
    require_finite(id_scores, "ID scores");
    auto const n = id_scores.size();
    // The epsilon keeps products such as 0.95 * 20 from rounding up past an
    // integer boundary.
    auto k = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    std::vector<double> sorted(id_scores.begin(), id_scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                     std::greater<>());
    return sorted[k - 1];
}

Decision detect(double score, double theta)
{
    if (!std::isfinite(score) || !std::isfinite(theta)) {
        throw Error(Errc::NonFiniteInput, "detect needs finite score and threshold");
    }
    return score >= theta ? Decision::id : Decision::ood;
}

double fpr_at_tpr(ScoreSample const& sample, double tpr)
{
    require_sample(sample);
    double const theta = calibrate_threshold(sample.id_scores, tpr);
    auto const accepted = std::count_if(sample.ood_scores.begin(), sample.ood_scores.end(),
                                        [theta](double s) { return s >= theta; });
    return static_cast<double>(accepted) / static_cast<double>(sample.ood_scores.size());
}

double auroc(ScoreSample const& sample)
{
    require_sample(sample);
    std::vector<double> ood = sample.ood_scores;
    std::sort(ood.begin(), ood.end());
    // Twice the Mann-Whitney U so ties stay integral.
    unsigned long long twice_u = 0;
    for (double x : sample.id_scores) {
        auto const lo = std::lower_bound(ood.begin(), ood.end(), x);
        auto const hi = std::upper_bound(lo, ood.end(), x);
        twice_u += 2ULL * static_cast<unsigned long long>(lo - ood.begin()) +
                   static_cast<unsigned long long>(hi - lo);
    }
    double const pairs = static_cast<double>(sample.id_scores.size()) * static_cast<double>(ood.size());
    return static_cast<double>(twice_u) / (2.0 * pairs);
}

void compute_averages(EvalReport& report)
{
    report.averages.clear();
    std::vector<std::string> order;
    std::map<std::string, std::vector<ReportRow const*>> by_method;
    for (auto const& row : report.rows) {
        auto& bucket = by_method[row.method];
        if (bucket.empty()) {
            order.push_back(row.method);
        }
        bucket.push_back(&row);
    }
    for (auto const& method : order) {
        auto const& bucket = by_method[method];
        ReportRow avg;
        avg.id_dataset = bucket.front()->id_dataset;
        avg.ood_dataset = kAverageLabel;
        avg.method = method;
        for (auto const* r : bucket) {
            avg.fpr95 += r->fpr95;
            avg.auroc += r->auroc;
        }
        avg.fpr95 /= static_cast<double>(bucket.size());
        avg.auroc /= static_cast<double>(bucket.size());
        report.averages.push_back(std::move(avg));
    }
}

std::string format_pct(double fraction)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

std::string render_tsv(EvalReport const& report)
{
    std::string out = "id_dataset\tood_dataset\tmethod\tfpr95_pct\tauroc_pct\n";
    auto emit = [&out](ReportRow const& r) {
        out += r.id_dataset + '\t' + r.ood_dataset + '\t' + r.method + '\t' + format_pct(r.fpr95) + '\t' +
               format_pct(r.auroc) + '\n';
    };
    for (auto const& r : report.rows) {
        emit(r);
    }
    for (auto const& r : report.averages) {
        emit(r);
    }
    return out;
}

std::string render_json(EvalReport const& report)
{
    nlohmann::json doc;
    doc["rows"] = nlohmann::json::array();
    for (auto const& r : report.rows) {
        doc["rows"].push_back(row_to_json(r));
    }
    doc["averages"] = nlohmann::json::array();
    for (auto const& r : report.averages) {
        doc["averages"].push_back(row_to_json(r));
    }
    return doc.dump(2) + "\n";
}

EvalReport parse_report_json(std::string const& text)
{
    try {
        auto const doc = nlohmann::json::parse(text);
        EvalReport report;
        for (auto const& j : doc.at("rows")) {
            report.rows.push_back(row_from_json(j));
        }
        for (auto const& j : doc.at("averages")) {
            report.averages.push_back(row_from_json(j));
        }
        return report;
    }
    catch (nlohmann::json::exception const& e) {
        throw Error(Errc::ParseError, std::string("report JSON: ") + e.what());
    }
}

} // namespace mmood
