#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gastro {

enum class ErrorKind {
  kInvalidInput,
  kOutOfModel,
  kNumerical,
  kInsufficientData,
  kNonConvergence,
  kInitializationFailure,
  kRegistrationFailure,
  kReconstructionFailure,
  kDegenerateConfiguration,
  kInvalidScene,
  kAtlasOverflow,
  kExport,
  kConfig,
  kIo,
};

std::string_view ToString(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ToString(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GASTRO_CHECK(cond, kind, msg)          \
  do {                                         \
    if (!(cond)) throw ::gastro::Error(kind, msg); \
  } while (0)

}  // namespace gastro
