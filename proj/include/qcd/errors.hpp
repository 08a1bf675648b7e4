#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QCD_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

// model-zoo
QCD_DEFINE_ERROR(UnstableParameters);
QCD_DEFINE_ERROR(UnknownModel);
QCD_DEFINE_ERROR(DimensionMismatch);
QCD_DEFINE_ERROR(NoClosedForm);

// detectors
QCD_DEFINE_ERROR(AlreadyStopped);
QCD_DEFINE_ERROR(InvalidRho);

// calibration
QCD_DEFINE_ERROR(OutOfRange);
QCD_DEFINE_ERROR(WindowTooSmall);

// risk-lab / audit
QCD_DEFINE_ERROR(InsufficientBudget);
QCD_DEFINE_ERROR(DegenerateConditioning);
QCD_DEFINE_ERROR(ExcessCensoring);
QCD_DEFINE_ERROR(QuadratureFailure);
QCD_DEFINE_ERROR(NoValidRho);
QCD_DEFINE_ERROR(NoDensity);

// cli
QCD_DEFINE_ERROR(UnknownKey);

#undef QCD_DEFINE_ERROR

/// Config syntax error; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("ParseError: line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace qcd
