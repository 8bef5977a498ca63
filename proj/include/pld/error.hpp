#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pld {

/// Raised on precondition violations (bad sizes, out-of-range arguments).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shape propagation failure; the message names the offending layer.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& layer, const std::string& what)
      : std::runtime_error("layer '" + layer + "': " + what), layer_(layer) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

/// Text parse failure with 1-based line context.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Binary load failure with the byte offset where decoding stopped.
class LoadError : public std::runtime_error {
 public:
  LoadError(std::size_t offset, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what), offset_(offset), reason_(what) {}
  LoadError(const std::string& what) : std::runtime_error(what), offset_(0), reason_(what) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

/// Unsupported or malformed file format (bit depth, channel count, magic).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Evaluation over an empty valid set.
class EmptyEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pld
