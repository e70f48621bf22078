// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rcnas {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A primitive or op received tensors whose dimensions violate its shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, schema violation or malformed JSON document.
/// The message starts with a JSON pointer to the offending element.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Binary or text input that does not follow its documented layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or objective during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-system failure (missing file, unwritable output directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcnas
