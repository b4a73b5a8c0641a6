#include "lungseg/error.hpp"

namespace lungseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::UnsupportedType: return "UnsupportedType";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnmappedLabel: return "UnmappedLabel";
    case ErrorCode::OutOfWindow: return "OutOfWindow";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::NameMismatch: return "NameMismatch";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BothEmpty: return "BothEmpty";
    case ErrorCode::NoIncludedSlices: return "NoIncludedSlices";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::BadWeights: return "BadWeights";
  }
  return "Unknown";
}

}  // namespace lungseg
