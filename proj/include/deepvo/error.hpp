#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deepvo {

enum class Errc {
  MalformedLine,
  NonRigid,
  TooShort,
  LengthMismatch,
  IoError,
  DecodeError,
  ZeroDimension,
  UnknownSequence,
  EmptySide,
  EmptySet,
  DimensionMismatch,
  InvalidConfig,
  MultiChannelInput,
  ImageTooSmall,
  ShapeMismatch,
  MissingGrad,
  ChannelMismatch,
  EmptySplit,
  DivergedLoss,
  CheckpointMissingStats,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace deepvo
