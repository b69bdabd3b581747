#pragma once

#include <stdexcept>
#include <string>

namespace vkd {

// Every failure the library reports derives from Error. The CLI maps the
// concrete type onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  enum class Kind { kInvalid, kUnknownKey, kBadValue, kInvariant };

  explicit ConfigError(const std::string& what, Kind kind = Kind::kInvalid,
                       std::string key = {})
      : Error(what), kind_(kind), key_(std::move(key)) {}

  Kind kind() const { return kind_; }
  // Config key the error refers to, when there is one.
  const std::string& key() const { return key_; }

 private:
  Kind kind_;
  std::string key_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace vkd
