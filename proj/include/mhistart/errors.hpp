#pragma once

#include <stdexcept>
#include <string>

namespace mhistart {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MHISTART_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

MHISTART_DEFINE_ERROR(HeadOutsideFrame);
MHISTART_DEFINE_ERROR(InsufficientHistory);
MHISTART_DEFINE_ERROR(IndexOutOfRange);
MHISTART_DEFINE_ERROR(DimensionMismatch);
MHISTART_DEFINE_ERROR(DegenerateData);
MHISTART_DEFINE_ERROR(NonConvergence);
MHISTART_DEFINE_ERROR(ShapeMismatch);
MHISTART_DEFINE_ERROR(DivergenceDetected);
MHISTART_DEFINE_ERROR(EmptyScene);
MHISTART_DEFINE_ERROR(NoTruePositives);
MHISTART_DEFINE_ERROR(InvalidArgument);
MHISTART_DEFINE_ERROR(FormatError);

#undef MHISTART_DEFINE_ERROR

}  // namespace mhistart
