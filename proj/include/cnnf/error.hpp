#pragma once

#include <stdexcept>
#include <string>

namespace cnnf {

// Every failure raised by the library derives from Error. The concrete type
// names the error class; the CLI maps classes onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { public: using Error::Error; };
class InvalidArgument : public Error { public: using Error::Error; };
class LabelError : public Error { public: using Error::Error; };
class StructureError : public Error { public: using Error::Error; };
class NameError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class DegenerateVarianceError : public Error { public: using Error::Error; };

// data-pipeline
class DataError : public Error { public: using Error::Error; };
class InvalidImageError : public DataError { public: using DataError::DataError; };
class BalanceError : public DataError { public: using DataError::DataError; };

// training
class DivergenceError : public Error {
public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

private:
  std::size_t epoch_;
  std::size_t batch_;
};

// serialization and text formats
class FormatError : public Error { public: using Error::Error; };
class ParseError : public FormatError { public: using FormatError::FormatError; };
class BadMagicError : public ParseError { public: using ParseError::ParseError; };
class VersionError : public ParseError { public: using ParseError::ParseError; };
class TruncationError : public ParseError { public: using ParseError::ParseError; };
class DuplicateNameError : public ParseError { public: using ParseError::ParseError; };
class ByteMismatchError : public ParseError { public: using ParseError::ParseError; };
class PrecisionMismatchError : public FormatError { public: using FormatError::FormatError; };
class ImportError : public Error { public: using Error::Error; };

class ConfigError : public Error { public: using Error::Error; };

}  // namespace cnnf
