#include "dpodyn/errors.hpp"

namespace dpodyn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidSpec: return "invalid-spec";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kResource: return "resource";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kEmptyDataset: return "empty-dataset";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kContractViolation: return "contract-violation";
    case ErrorKind::kDiverged: return "diverged";
    case ErrorKind::kUndefinedCosine: return "undefined-cosine";
    case ErrorKind::kDegeneratePriority: return "degenerate-priority";
    case ErrorKind::kRender: return "render";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace dpodyn
