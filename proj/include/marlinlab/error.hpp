// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace marlinlab {

/// Raised on any contract violation: bad shapes, malformed files, values that
/// cannot be represented.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

}  // namespace marlinlab
