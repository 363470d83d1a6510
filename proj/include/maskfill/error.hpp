// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace maskfill {

/// A caller broke an operation's precondition (shape mismatch, bad argument).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Base class of file and codec failures. Messages carry the offending path.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UnsupportedFormatError : public IoError {
public:
  using IoError::IoError;
};

class TruncatedFileError : public IoError {
public:
  using IoError::IoError;
};

class BadMagicError : public IoError {
public:
  using IoError::IoError;
};

/// Stored tensor shapes or the echoed config disagree with what the caller expects.
class ShapeMismatchError : public IoError {
public:
  using IoError::IoError;
};

/// Non-finite loss or values during optimization.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void expects(bool condition, const std::string &message) {
  if (!condition)
    throw ContractViolation(message);
}

} // namespace maskfill
