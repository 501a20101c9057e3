#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpodyn {

enum class ErrorKind {
  kInvalidSpec,
  kDomain,
  kResource,
  kInsufficientData,
  kParse,
  kSchema,
  kEmptyDataset,
  kShape,
  kContractViolation,
  kDiverged,
  kUndefinedCosine,
  kDegeneratePriority,
  kRender,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library is an Error carrying its kind, so
// callers (the CLI in particular) can map kinds to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dpodyn
