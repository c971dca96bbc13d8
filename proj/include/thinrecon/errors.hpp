#pragma once

#include <stdexcept>
#include <string>

namespace thinrecon {

// A file or directory could not be read, or its content is unusable.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A malformed record; `location` is "line N" for text inputs and "byte N"
// for binary inputs.
class ParseError : public InputError {
 public:
  ParseError(std::string file, std::string location, const std::string& message)
      : InputError(file + " (" + location + "): " + message),
        file_(std::move(file)),
        location_(std::move(location)) {}

  const std::string& file() const { return file_; }
  const std::string& location() const { return location_; }

 private:
  std::string file_;
  std::string location_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace thinrecon
