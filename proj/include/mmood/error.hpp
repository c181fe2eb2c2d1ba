#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmood {

enum class Errc {
    ZeroNormEmbedding,
    DimensionMismatch,
    NonFiniteValue,
    EmptyClass,
    LengthMismatch,
    InvalidConfig,
    EmptyScores,
    InvalidTpr,
    NonFiniteInput,
    UnboundPlaceholder,
    EmptyResponse,
    CategoryCountMismatch,
    WordlistTooSmall,
    PreconditionViolation,
    BackendError,
    BackendUnreachable,
    MalformedResponse,
    DimInconsistent,
    RefusalDetected,
    IOError,
    CacheCorrupt,
    WriteConflict,
    ParseError,
    EmptyManifest,
    ConfigError,
};

[[nodiscard]] std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `stage()` names the pipeline step that raised it
/// ("generate", "embed", ...) and is empty for pure in-process errors.
class Error : public std::runtime_error {
public:
    Error(Errc code, std::string const& message, std::string stage = {});

    [[nodiscard]] Errc code() const noexcept { return code_; }
    [[nodiscard]] std::string const& stage() const noexcept { return stage_; }
    [[nodiscard]] std::string const& detail() const noexcept { return detail_; }

    /// Copy of this error with `stage` prepended to the existing tag, so a
    /// "generate" failure inside "envision" reads "envision/generate".
    [[nodiscard]] Error with_stage(std::string stage) const;

private:
    Errc code_;
    std::string stage_;
    std::string detail_;
};

} // namespace mmood
