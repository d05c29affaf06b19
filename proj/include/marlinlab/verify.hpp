// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace marlinlab::verify {

struct SuiteResult {
  std::string suite;
  bool ok = true;
  std::size_t checks = 0;
  std::string detail;  // first failure, empty on success
};

/// numerics, quantizer, codec, layout, sparse24, scheduler, perfmodel, simgemm
std::vector<std::string> suite_names();

/// Runs one seeded property suite; throws Error for an unknown name.
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

std::vector<SuiteResult> run_all(std::uint64_t seed);

}  // namespace marlinlab::verify
