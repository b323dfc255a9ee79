#pragma once

#include <stdexcept>
#include <string>

namespace protoseg {

// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorKind { Usage, Data, Verification };

/// Base of every error the library throws. `code()` is a stable,
/// machine-greppable identifier such as "ShapeError".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, ErrorKind kind = ErrorKind::Data)
      : std::runtime_error(message), code_(std::move(code)), kind_(kind) {}

  const std::string& code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string code_;
  ErrorKind kind_;
};

#define PROTOSEG_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& message) : Error(#Name, message, Kind) {} \
  };

PROTOSEG_DEFINE_ERROR(ShapeError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(ShapeMismatch, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(ConfigError, ErrorKind::Usage)
PROTOSEG_DEFINE_ERROR(ArityError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(LevelError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(LabelDomainError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(MissingModality, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(EmptyBrainMask, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(CropTooLarge, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(InvalidSpec, ErrorKind::Usage)
PROTOSEG_DEFINE_ERROR(NormalizationError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(RangeError, ErrorKind::Usage)
PROTOSEG_DEFINE_ERROR(NonFiniteLoss, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(CheckpointVersionError, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(CheckpointCorrupt, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(ConfigMismatch, ErrorKind::Data)
PROTOSEG_DEFINE_ERROR(IoError, ErrorKind::Data)

#undef PROTOSEG_DEFINE_ERROR

}  // namespace protoseg
