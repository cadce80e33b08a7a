#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trajgen {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TRAJGEN_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

// geometry
TRAJGEN_DEFINE_ERROR(EmptyMask);
TRAJGEN_DEFINE_ERROR(InvalidDepth);
TRAJGEN_DEFINE_ERROR(EmptyInput);

// simulator
TRAJGEN_DEFINE_ERROR(PlacementInfeasible);
TRAJGEN_DEFINE_ERROR(ObjectNotFound);

// chat backends
TRAJGEN_DEFINE_ERROR(BackendError);
TRAJGEN_DEFINE_ERROR(BackendTimeout);
TRAJGEN_DEFINE_ERROR(ReplayExhausted);
TRAJGEN_DEFINE_ERROR(IoError);

// sandbox gateway
TRAJGEN_DEFINE_ERROR(SpawnError);
TRAJGEN_DEFINE_ERROR(ProtocolError);

// prompts, catalog, bench
TRAJGEN_DEFINE_ERROR(ConfigError);
TRAJGEN_DEFINE_ERROR(VerdictUnparseable);
TRAJGEN_DEFINE_ERROR(UnknownTask);
TRAJGEN_DEFINE_ERROR(CatalogError);

// output parsing: the message text is what the model gets back
TRAJGEN_DEFINE_ERROR(ParseError);

#undef TRAJGEN_DEFINE_ERROR

#define TRAJGEN_DEFINE_PARSE_ERROR(Name) \
  class Name : public ParseError {       \
   public:                               \
    using ParseError::ParseError;        \
  }

TRAJGEN_DEFINE_PARSE_ERROR(UnterminatedFence);
TRAJGEN_DEFINE_PARSE_ERROR(MissingCode);
TRAJGEN_DEFINE_PARSE_ERROR(MissingTags);
TRAJGEN_DEFINE_PARSE_ERROR(ForbiddenCode);
TRAJGEN_DEFINE_PARSE_ERROR(BadNumber);
TRAJGEN_DEFINE_PARSE_ERROR(MalformedTrajectory);

#undef TRAJGEN_DEFINE_PARSE_ERROR

/// A trajectory row has the wrong number of values.
class BadArity : public ParseError {
 public:
  BadArity(std::size_t row, const std::string& detail) : ParseError(detail), row_(row) {}
  /// Zero-based index of the offending row.
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// The replayed request history stopped matching the recording.
class ReplayDivergence : public Error {
 public:
  ReplayDivergence(std::size_t index, const std::string& detail)
      : Error("replay diverged at message " + std::to_string(index) + ": " + detail),
        index_(index) {}

  /// Index into the transcript's message array of the first differing message.
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace trajgen
