#include "strokeval/error.hpp"

namespace strokeval {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io: return "Io";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::NonPositivePixdim: return "NonPositivePixdim";
        case ErrorCode::NonBinaryMask: return "NonBinaryMask";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::EmptyStack: return "EmptyStack";
        case ErrorCode::IncompleteMatrix: return "IncompleteMatrix";
        case ErrorCode::FewerThanTwoTeams: return "FewerThanTwoTeams";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::OutOfRangeP: return "OutOfRangeP";
        case ErrorCode::ConstantInput: return "ConstantInput";
        case ErrorCode::NoLesionLoad: return "NoLesionLoad";
        case ErrorCode::UnknownAtlasLabel: return "UnknownAtlasLabel";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::Manifest: return "Manifest";
        case ErrorCode::DuplicateCaseId: return "DuplicateCaseId";
        case ErrorCode::InsufficientPool: return "InsufficientPool";
        case ErrorCode::OutOfRangeScore: return "OutOfRangeScore";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::UnknownItem: return "UnknownItem";
        case ErrorCode::ClosedSession: return "ClosedSession";
        case ErrorCode::NoCompletedSessions: return "NoCompletedSessions";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace strokeval
