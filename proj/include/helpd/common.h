#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace helpd {

#ifdef HELPD_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Checkpoint dtype codes.
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kDtypeF64 = 2;
inline constexpr std::uint8_t kDtypeCode =
    sizeof(Real) == 8 ? kDtypeF64 : kDtypeF32;

// Base for every error raised by the library. Callers that only care about
// "something in helpd failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace helpd
