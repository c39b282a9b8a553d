#include "tfl/error.hpp"

namespace tfl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyTable: return "empty-table";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kEmptySentence: return "empty-sentence";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMissingFixture: return "missing-fixture";
    case ErrorCode::kProviderPermanent: return "provider-permanent";
    case ErrorCode::kProviderExhausted: return "provider-exhausted-retries";
    case ErrorCode::kEmptyDistillation: return "empty-distillation";
    case ErrorCode::kUnscoreable: return "unscoreable";
    case ErrorCode::kMissingScore: return "missing-score";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kAuth: return "auth";
    case ErrorCode::kBoundUnsatisfiable: return "bound-unsatisfiable";
    case ErrorCode::kPrecondition: return "precondition";
  }
  return "unknown";
}

}  // namespace tfl
