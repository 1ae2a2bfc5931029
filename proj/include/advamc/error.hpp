#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advamc {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ADVAMC_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

ADVAMC_DEFINE_ERROR(UnsupportedScheme);
ADVAMC_DEFINE_ERROR(InvalidSymbol);
ADVAMC_DEFINE_ERROR(EmptySignal);
ADVAMC_DEFINE_ERROR(ZeroPowerSignal);
ADVAMC_DEFINE_ERROR(ZeroPowerPerturbation);
ADVAMC_DEFINE_ERROR(ZeroPerturbation);
ADVAMC_DEFINE_ERROR(InvalidSplit);
ADVAMC_DEFINE_ERROR(VersionError);
ADVAMC_DEFINE_ERROR(ShapeError);
ADVAMC_DEFINE_ERROR(LabelError);
ADVAMC_DEFINE_ERROR(TapeEmpty);
ADVAMC_DEFINE_ERROR(ConfigError);
ADVAMC_DEFINE_ERROR(CheckpointError);
ADVAMC_DEFINE_ERROR(DataError);

#undef ADVAMC_DEFINE_ERROR

/// Malformed binary input. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace advamc
