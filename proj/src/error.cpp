#include "deepvo/error.hpp"

namespace deepvo {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::NonRigid: return "NonRigid";
    case Errc::TooShort: return "TooShort";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::IoError: return "IoError";
    case Errc::DecodeError: return "DecodeError";
    case Errc::ZeroDimension: return "ZeroDimension";
    case Errc::UnknownSequence: return "UnknownSequence";
    case Errc::EmptySide: return "EmptySide";
    case Errc::EmptySet: return "EmptySet";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::MultiChannelInput: return "MultiChannelInput";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MissingGrad: return "MissingGrad";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::CheckpointMissingStats: return "CheckpointMissingStats";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace deepvo
