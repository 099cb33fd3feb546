// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gersp {

/// Invalid configuration (bad hyperparameter, shape constraint violated).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem / decoding failures. Messages name the offending path.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or numerically invalid inputs.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint container failures, with a stable machine-readable code.
class CheckpointError : public std::runtime_error {
public:
  enum class Code {
    bad_magic,
    version_mismatch,
    truncated,
    checksum_mismatch,
    bad_manifest,
    shape_mismatch,
    missing_tensor,
  };

  CheckpointError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Code code() const { return code_; }

  static const char* code_name(Code c) {
    switch (c) {
      case Code::bad_magic: return "bad_magic";
      case Code::version_mismatch: return "version_mismatch";
      case Code::truncated: return "truncated";
      case Code::checksum_mismatch: return "checksum_mismatch";
      case Code::bad_manifest: return "bad_manifest";
      case Code::shape_mismatch: return "shape_mismatch";
      case Code::missing_tensor: return "missing_tensor";
    }
    return "unknown";
  }

private:
  Code code_;
};

}  // namespace gersp
