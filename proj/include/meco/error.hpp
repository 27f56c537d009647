#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace meco {

// Domain errors map to CLI exit code 1, IoError to exit code 2.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class FormatError : public Error {
  public:
    using Error::Error;
};

class CorruptionError : public Error {
  public:
    CorruptionError(const std::string & what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

  private:
    std::uint64_t offset_;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class AmbiguityError : public Error {
  public:
    using Error::Error;
};

class InsufficientDataError : public Error {
  public:
    using Error::Error;
};

class DegenerateDataError : public Error {
  public:
    using Error::Error;
};

class NumericalError : public Error {
  public:
    NumericalError(const std::string & what, int iterations, double last_delta)
        : Error(what + " (iterations=" + std::to_string(iterations) +
                ", last_delta=" + std::to_string(last_delta) + ")"),
          iterations_(iterations), last_delta_(last_delta) {}

    int iterations() const noexcept { return iterations_; }
    double last_delta() const noexcept { return last_delta_; }

  private:
    int iterations_;
    double last_delta_;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class UnparseableResponseError : public Error {
  public:
    using Error::Error;
};

class UndefinedScoreError : public Error {
  public:
    using Error::Error;
};

} // namespace meco
