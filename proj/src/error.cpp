#include "mmood/error.hpp"

namespace mmood {

namespace {

std::string compose(Errc code, std::string const& message, std::string const& stage)
{
    std::string out;
    if (!stage.empty()) {
        out += "[";
        out += stage;
        out += "] ";
    }
    out += to_string(code);
    if (!message.empty()) {
        out += ": ";
        out += message;
    }
    return out;
}

} // namespace

std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::InvalidTpr: return "InvalidTpr";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::UnboundPlaceholder: return "UnboundPlaceholder";
    case Errc::EmptyResponse: return "EmptyResponse";
    case Errc::CategoryCountMismatch: return "CategoryCountMismatch";
    case Errc::WordlistTooSmall: return "WordlistTooSmall";
    case Errc::PreconditionViolation: return "PreconditionViolation";
    case Errc::BackendError: return "BackendError";
    case Errc::BackendUnreachable: return "BackendUnreachable";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::DimInconsistent: return "DimInconsistent";
    case Errc::RefusalDetected: return "RefusalDetected";
    case Errc::IOError: return "IOError";
    case Errc::CacheCorrupt: return "CacheCorrupt";
    case Errc::WriteConflict: return "WriteConflict";
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyManifest: return "EmptyManifest";
    case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(Errc code, std::string const& message, std::string stage)
: std::runtime_error(compose(code, message, stage))
, code_(code)
, stage_(std::move(stage))
, detail_(message)
{
}

Error Error::with_stage(std::string stage) const
{
    if (!stage_.empty()) {
        stage += "/";
        stage += stage_;
    }
    return Error(code_, detail_, std::move(stage));
}

} // namespace mmood
