#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tfl {

enum class ErrorCode {
  kEmptyTable,
  kDomain,
  kEmptySentence,
  kConfig,
  kFormat,
  kIo,
  kMissingFixture,
  kProviderPermanent,
  kProviderExhausted,
  kEmptyDistillation,
  kUnscoreable,
  kMissingScore,
  kNotFound,
  kConflict,
  kAuth,
  kBoundUnsatisfiable,
  kPrecondition,
};

std::string_view error_code_name(ErrorCode code);

// Every library failure is reported as a tfl::Error carrying a code, so callers
// (the CLI, the HTTP service) can map failures without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tfl
