#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace odd {

enum class Errc {
    EmptyInput,
    UnknownToken,
    UnknownId,
    EmptySequence,
    TimestampRegression,
    CorruptSnapshot,
    VersionMismatch,
    EmptyCandidates,
    ProviderUnavailable,
    EmptyCorpus,
    NonPositiveTemperature,
    MissingSubstitution,
    InvalidSchedule,
    InvalidTemplate,
    EmptyWindow,
    EmptyReference,
    EmptyList,
    InvalidConfig,
    Io,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure surfaced by the library is an odd::Error; code() tells callers
// which contract was violated.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace odd
