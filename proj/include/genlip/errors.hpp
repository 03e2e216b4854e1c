// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace genlip {

/// Invalid configuration values or combinations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or unusable input data (images, manifests, samples).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or mismatched on-disk formats.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace genlip
