#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmrank {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(std::string id, const std::string& context)
      : Error("duplicate id '" + id + "' in " + context), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class UnknownKindError : public Error {
 public:
  explicit UnknownKindError(const std::string& kind)
      : Error("unknown interaction kind '" + kind + "'") {}
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class MissingEmbeddingError : public Error {
 public:
  explicit MissingEmbeddingError(std::string key)
      : Error("no embedding for image_ref '" + key + "'"), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class LayoutMismatchError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t step)
      : Error("non-finite weight update at SGD step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace mmrank
