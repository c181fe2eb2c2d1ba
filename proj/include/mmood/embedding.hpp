#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmood {

/// Encoder feature vector held in double precision. Always non-empty and
/// finite; unit norm only after `normalize`.
class Embedding {
public:
    Embedding() = default;

    /// Throws DimensionMismatch on an empty vector and NonFiniteValue on
    /// NaN/Inf components.
    explicit Embedding(std::vector<double> values);

    [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<double const> values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] double norm() const noexcept;
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

    friend bool operator==(Embedding const&, Embedding const&) = default;

private:
    std::vector<double> values_;
};

using ImageRef = std::string;

/// Images of one ID class with their features, parallel by index.
struct ClassImageSet {
    std::string class_label;
    std::vector<ImageRef> image_refs;
    std::vector<Embedding> embeddings;

    /// Throws EmptyClass, LengthMismatch or DimensionMismatch.
    void validate() const;
};

inline constexpr double kZeroNormThreshold = 1e-12;

[[nodiscard]] Embedding normalize(Embedding const& v);

/// Cosine similarity clamped to [-1, 1].
[[nodiscard]] double cosine(Embedding const& u, Embedding const& v);

[[nodiscard]] double dot(Embedding const& u, Embedding const& v);

/// Componentwise arithmetic mean of raw features, summed left to right.
/// The result is not renormalized.
[[nodiscard]] Embedding mean_embedding(std::span<Embedding const> features);
[[nodiscard]] Embedding mean_embedding(ClassImageSet const& set);

/// Index of the feature nearest (Euclidean) to the class mean; ties go to
/// the lowest index.
[[nodiscard]] std::size_t representative_index(std::span<Embedding const> features);

[[nodiscard]] ImageRef const& representative_image(ClassImageSet const& set);

} // namespace mmood
