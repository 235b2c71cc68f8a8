#pragma once

#include <stdexcept>
#include <string>

namespace voltron {

// Base of every error the library throws. The kind() string is stable and
// used by the CLI to map failures onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define VOLTRON_DEFINE_ERROR(Name, tag)                                        \
  class Name : public Error {                                                  \
  public:                                                                      \
    using Error::Error;                                                        \
    const char* kind() const noexcept override { return tag; }                 \
  };

VOLTRON_DEFINE_ERROR(ShapeError, "shape")
VOLTRON_DEFINE_ERROR(StateError, "state")
VOLTRON_DEFINE_ERROR(NumericError, "numeric")
VOLTRON_DEFINE_ERROR(IoError, "io")
VOLTRON_DEFINE_ERROR(ParseError, "parse")
VOLTRON_DEFINE_ERROR(ValidationError, "validation")
VOLTRON_DEFINE_ERROR(EmptyVocabError, "empty-vocabulary")
VOLTRON_DEFINE_ERROR(EmptyGraphError, "empty-graph")
VOLTRON_DEFINE_ERROR(SamplingError, "sampling")
VOLTRON_DEFINE_ERROR(ConfigError, "config")
VOLTRON_DEFINE_ERROR(DependencyError, "dependency")

#undef VOLTRON_DEFINE_ERROR

}  // namespace voltron
