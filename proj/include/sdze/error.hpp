// Copyright 2026 The SDZE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace sdze {

// Precondition violations on shapes, sizes and indices.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration values or unknown tags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric whose normalizer vanished (e.g. relative L2 against an all-zero
// reference).
class DegenerateMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint and other on-disk format problems.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sdze
