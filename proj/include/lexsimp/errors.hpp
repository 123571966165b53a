#pragma once

#include <stdexcept>
#include <string>

namespace lexsimp {

// Base class for every error raised by the library. Each subclass maps onto
// one failure family so callers (the CLI in particular) can pick exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened or read.
class LoadError : public Error {
 public:
  using Error::Error;
};

// A file was readable but its content violates the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A corpus had no usable sentences.
class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

// Mismatched sequence lengths or matrix shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input longer than a model's maximum sequence length.
class TruncationError : public Error {
 public:
  using Error::Error;
};

// A model was used before it was trained or loaded.
class StateError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss, checksum drift and other failures during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset split impossible at the requested fraction.
class SplitError : public Error {
 public:
  using Error::Error;
};

// Toy world could not be generated from its spec.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Numerically degenerate input, e.g. a zero-norm vector for a cosine.
class NumericError : public Error {
 public:
  using Error::Error;
};

// LLM endpoint failure. `transient` failures are retried by the annotator.
class EndpointError : public Error {
 public:
  EndpointError(const std::string& what, bool transient)
      : Error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

}  // namespace lexsimp
