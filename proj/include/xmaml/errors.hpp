#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xmaml {

// Base of every error the library raises. Callers that only care about
// "something went wrong in xmaml" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnknownGroupError : public Error {
 public:
  explicit UnknownGroupError(const std::string& group)
      : Error("unknown group '" + group + "'"), group_(group) {}
  const std::string& group() const { return group_; }

 private:
  std::string group_;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  InsufficientDataError(const std::string& group, std::size_t needed,
                        std::size_t available)
      : Error("group '" + group + "' needs " + std::to_string(needed) +
              " records but has " + std::to_string(available)),
        group_(group),
        needed_(needed),
        available_(available) {}
  const std::string& group() const { return group_; }
  std::size_t needed() const { return needed_; }
  std::size_t available() const { return available_; }

 private:
  std::string group_;
  std::size_t needed_;
  std::size_t available_;
};

class EmptyGroupError : public Error {
 public:
  using Error::Error;
};

class EmptyRowError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class DuplicateCellError : public Error {
 public:
  DuplicateCellError(const std::string& language, const std::string& feature,
                     std::size_t first_line, std::size_t second_line)
      : Error("duplicate cell (" + language + ", " + feature + ") at lines " +
              std::to_string(first_line) + " and " +
              std::to_string(second_line)),
        first_line_(first_line),
        second_line_(second_line) {}
  std::size_t first_line() const { return first_line_; }
  std::size_t second_line() const { return second_line_; }

 private:
  std::size_t first_line_;
  std::size_t second_line_;
};

class InsufficientLanguagesError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class StaleCheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace xmaml
