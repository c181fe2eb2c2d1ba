#include "mmood/scoring.hpp"

#include "mmood/error.hpp"
#include "mmood/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace mmood {

namespace {

struct SoftmaxPeaks {
    double id_max = 0.0;
    double outlier_max = 0.0;
};

// Peaks of softmax(scale * s / temperature) over the whole span, split at
// id_count. Max-subtracted so exponents stay <= 0.
SoftmaxPeaks softmax_peaks(std::span<double const> s, std::size_t id_count, double factor)
{
    double shift = -std::numeric_limits<double>::infinity();
    for (double x : s) {
        shift = std::max(shift, factor * x);
    }
    double denom = 0.0;
    double id_peak = 0.0;
    double outlier_peak = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double const e = std::exp(factor * s[i] - shift);
        denom += e;
        if (i < id_count) {
            id_peak = std::max(id_peak, e);
        }
        else {
            outlier_peak = std::max(outlier_peak, e);
        }
    }
    return {id_peak / denom, outlier_peak / denom};
}

void require_id_prefix(std::span<double const> s, std::size_t id_count)
{
    if (id_count == 0) {
        throw Error(Errc::LengthMismatch, "at least one ID label is required");
    }
    if (s.size() < id_count) {
        throw Error(Errc::LengthMismatch,
                    "score vector of length " + std::to_string(s.size()) + " shorter than K=" + std::to_string(id_count));
    }
}

} // namespace

LabelSet::LabelSet(std::vector<std::string> id_labels, std::vector<std::string> outlier_labels)
: id_(std::move(id_labels))
, outlier_(std::move(outlier_labels))
{
    if (id_.empty()) {
        throw Error(Errc::PreconditionViolation, "label set needs at least one ID label");
    }
    std::set<std::string> seen;
    auto check = [&](std::string const& label, char const* segment) {
        std::string key = to_lower(trim(label));
        if (key.empty()) {
            throw Error(Errc::PreconditionViolation, std::string("empty ") + segment + " label");
        }
        if (!seen.insert(std::move(key)).second) {
            throw Error(Errc::PreconditionViolation, std::string("duplicate ") + segment + " label '" + label + "'");
        }
    };
    for (auto const& l : id_) {
        check(l, "ID");
    }
    for (auto const& l : outlier_) {
        check(l, "outlier");
    }
}

std::vector<std::string> LabelSet::all() const
{
    std::vector<std::string> out = id_;
    out.insert(out.end(), outlier_.begin(), outlier_.end());
    return out;
}

std::string_view to_string(Method m) noexcept
{
    switch (m) {
    case Method::mmood: return "mmood";
    case Method::mcm: return "mcm";
    case Method::maxlogit: return "maxlogit";
    case Method::energy: return "energy";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name)
{
    for (Method m : {Method::mmood, Method::mcm, Method::maxlogit, Method::energy}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    return std::nullopt;
}

double ScoringConfig::logit_scale_for(Method m) const
{
    if (logit_scale) {
        return *logit_scale;
    }
    return (m == Method::maxlogit || m == Method::energy) ? 100.0 : 1.0;
}

void ScoringConfig::validate() const
{
    if (!std::isfinite(beta) || beta < 0.0) {
        throw Error(Errc::InvalidConfig, "beta must be finite and >= 0");
    }
    if (!std::isfinite(temperature) || temperature <= 0.0) {
        throw Error(Errc::InvalidConfig, "temperature must be finite and > 0");
    }
    if (logit_scale && (!std::isfinite(*logit_scale) || *logit_scale <= 0.0)) {
        throw Error(Errc::InvalidConfig, "logit_scale must be finite and > 0");
    }
}

ScoreVector similarity_vector(Embedding const& image, std::span<Embedding const> labels,
                              std::size_t id_count, std::size_t outlier_count)
{
    if (labels.empty() || labels.size() != id_count + outlier_count) {
        throw Error(Errc::LengthMismatch, "expected " + std::to_string(id_count + outlier_count) +
                                              " label embeddings, got " + std::to_string(labels.size()));
    }
    ScoreVector out;
    out.id_count = id_count;
    out.values.reserve(labels.size());
    for (auto const& label : labels) {
        out.values.push_back(cosine(image, label));
    }
    return out;
}

double mmood_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg)
{
    require_id_prefix(s, id_count);
    cfg.validate();
    double const factor = cfg.logit_scale_for(Method::mmood) / cfg.temperature;
    auto const peaks = softmax_peaks(s, id_count, factor);
    if (s.size() == id_count) {
        return peaks.id_max;
    }
    return peaks.id_max - cfg.beta * peaks.outlier_max;
}

double mcm_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg)
{
    require_id_prefix(s, id_count);
    cfg.validate();
    double const factor = cfg.logit_scale_for(Method::mcm) / cfg.temperature;
    return softmax_peaks(s.first(id_count), id_count, factor).id_max;
}

double maxlogit_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg)
{
    require_id_prefix(s, id_count);
    cfg.validate();
    auto const id = s.first(id_count);
    return cfg.logit_scale_for(Method::maxlogit) * *std::max_element(id.begin(), id.end());
}

double energy_score(std::span<double const> s, std::size_t id_count, ScoringConfig const& cfg)
{
    require_id_prefix(s, id_count);
    cfg.validate();
    double const factor = cfg.logit_scale_for(Method::energy) / cfg.temperature;
    auto const id = s.first(id_count);
    double const peak = factor * *std::max_element(id.begin(), id.end());
    double acc = 0.0;
    for (double x : id) {
        acc += std::exp(factor * x - peak);
    }
    return cfg.temperature * (peak + std::log(acc));
}

double score(Method m, ScoreVector const& s, ScoringConfig const& cfg)
{
    switch (m) {
    case Method::mmood: return mmood_score(s.values, s.id_count, cfg);
    case Method::mcm: return mcm_score(s.values, s.id_count, cfg);
    case Method::maxlogit: return maxlogit_score(s.values, s.id_count, cfg);
    case Method::energy: return energy_score(s.values, s.id_count, cfg);
    }
    throw Error(Errc::InvalidConfig, "unknown method");
}

} // namespace mmood
