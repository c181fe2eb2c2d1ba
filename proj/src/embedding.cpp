#include "mmood/embedding.hpp"

#include "mmood/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmood {

namespace {

void require_same_dim(Embedding const& u, Embedding const& v)
{
    if (u.dim() != v.dim()) {
        throw Error(Errc::DimensionMismatch,
                    "dims " + std::to_string(u.dim()) + " and " + std::to_string(v.dim()));
    }
}

double squared_distance(std::span<double const> a, std::span<double const> b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double const d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace

Embedding::Embedding(std::vector<double> values)
: values_(std::move(values))
{
    if (values_.empty()) {
        throw Error(Errc::DimensionMismatch, "embedding must have dim >= 1");
    }
    for (double x : values_) {
        if (!std::isfinite(x)) {
            throw Error(Errc::NonFiniteValue, "embedding component is not finite");
        }
    }
}

double Embedding::norm() const noexcept
{
    double acc = 0.0;
    for (double x : values_) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

void ClassImageSet::validate() const
{
    if (embeddings.empty()) {
        throw Error(Errc::EmptyClass, "class '" + class_label + "' has no images");
    }
    if (embeddings.size() != image_refs.size()) {
        throw Error(Errc::LengthMismatch, "class '" + class_label + "': image_refs and embeddings differ in length");
    }
    for (auto const& e : embeddings) {
        if (e.dim() != embeddings.front().dim()) {
            throw Error(Errc::DimensionMismatch, "class '" + class_label + "' mixes embedding dims");
        }
    }
}

Embedding normalize(Embedding const& v)
{
    double const n = v.norm();
    if (!(n >= kZeroNormThreshold)) {
        throw Error(Errc::ZeroNormEmbedding, "cannot normalize a zero-norm vector");
    }
    std::vector<double> out(v.values().begin(), v.values().end());
    for (double& x : out) {
        x /= n;
    }
    return Embedding(std::move(out));
}

double dot(Embedding const& u, Embedding const& v)
{
    require_same_dim(u, v);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) {
        acc += u[i] * v[i];
    }
    return acc;
}

double cosine(Embedding const& u, Embedding const& v)
{
    require_same_dim(u, v);
    double const nu = u.norm();
    double const nv = v.norm();
    if (!(nu >= kZeroNormThreshold) || !(nv >= kZeroNormThreshold)) {
        throw Error(Errc::ZeroNormEmbedding, "cosine of a zero-norm vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Embedding mean_embedding(std::span<Embedding const> features)
{
    if (features.empty()) {
        throw Error(Errc::EmptyClass, "mean of an empty feature set");
    }
    std::size_t const dim = features.front().dim();
    std::vector<double> sum(dim, 0.0);
    for (auto const& f : features) {
        if (f.dim() != dim) {
            throw Error(Errc::DimensionMismatch, "features of mixed dimension");
        }
        for (std::size_t i = 0; i < dim; ++i) {
            sum[i] += f[i];
        }
    }
    auto const n = static_cast<double>(features.size());
    for (double& x : sum) {
        x /= n;
    }
    return Embedding(std::move(sum));
}

Embedding mean_embedding(ClassImageSet const& set)
{
    set.validate();
    return mean_embedding(std::span<Embedding const>(set.embeddings));
}

std::size_t representative_index(std::span<Embedding const> features)
{
    Embedding const mean = mean_embedding(features);
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < features.size(); ++j) {
        double const d = squared_distance(features[j].values(), mean.values());
        if (d < best_dist) {
            best_dist = d;
            best = j;
        }
    }
    return best;
}

ImageRef const& representative_image(ClassImageSet const& set)
{
    set.validate();
    return set.image_refs[representative_index(set.embeddings)];
}

} // namespace mmood
