#pragma once

#include <stdexcept>
#include <string>

namespace ssgr {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// linalg / pruner
struct NotPositiveDefinite : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };
struct IndivisibleGroup : Error { using Error::Error; };

// tensorio
struct MalformedHeader : Error { using Error::Error; };
struct BoundsViolation : Error { using Error::Error; };
struct DuplicateName : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };
struct NoMatches : Error { using Error::Error; };

// micromodel
struct ContextOverflow : Error { using Error::Error; };
struct InvalidToken : Error { using Error::Error; };
struct EmptyCorpus : Error { using Error::Error; };

// calib / eval
struct EndpointUnavailable : Error { using Error::Error; };
struct CacheCorruption : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };
struct InsufficientProblems : Error { using Error::Error; };

// config / CLI
struct ValidationError : Error { using Error::Error; };

} // namespace ssgr
