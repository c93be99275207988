#pragma once

#include <stdexcept>
#include <string>

namespace odseg {

/// Base of every library error. `kind()` is the machine-readable class name
/// printed by the CLI as the first token of its one-line error report.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define ODSEG_DEFINE_ERROR(Name)                                       \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  };

ODSEG_DEFINE_ERROR(ShapeError)
ODSEG_DEFINE_ERROR(ParameterError)
ODSEG_DEFINE_ERROR(FormatError)
ODSEG_DEFINE_ERROR(ValidationError)
ODSEG_DEFINE_ERROR(StateError)
ODSEG_DEFINE_ERROR(ContractError)
ODSEG_DEFINE_ERROR(FileError)
ODSEG_DEFINE_ERROR(UsageError)

#undef ODSEG_DEFINE_ERROR

}  // namespace odseg
