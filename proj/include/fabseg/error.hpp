#pragma once

#include <stdexcept>
#include <string>

namespace fabseg {

/// Base class for every data-level failure raised by the library. Anything
/// not derived from this is an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class RemeshError : public Error {
 public:
  RemeshError(const std::string& what, long achieved_faces)
      : Error(what + " (achieved " + std::to_string(achieved_faces) + " faces)"),
        achieved_faces_(achieved_faces) {}
  long achieved_faces() const { return achieved_faces_; }

 private:
  long achieved_faces_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace fabseg
