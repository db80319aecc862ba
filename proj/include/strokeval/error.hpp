#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace strokeval {

enum class ErrorCode {
    Io,
    BadMagic,
    BadHeader,
    UnsupportedDatatype,
    TruncatedPayload,
    NonPositivePixdim,
    NonBinaryMask,
    GridMismatch,
    EmptyStack,
    IncompleteMatrix,
    FewerThanTwoTeams,
    EmptyInput,
    LengthMismatch,
    OutOfRangeP,
    ConstantInput,
    NoLesionLoad,
    UnknownAtlasLabel,
    UnknownClass,
    Manifest,
    DuplicateCaseId,
    InsufficientPool,
    OutOfRangeScore,
    UnknownSession,
    UnknownItem,
    ClosedSession,
    NoCompletedSessions,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace strokeval
