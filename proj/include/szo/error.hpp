// Copyright 2026 The sparse-zo Authors.
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace szo {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes, lengths or layer layouts that do not line up.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A non-finite value was produced or observed.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::uint64_t step_seed = 0)
      : Error(what), step_seed_(step_seed) {}

  std::uint64_t step_seed() const noexcept { return step_seed_; }

 private:
  std::uint64_t step_seed_;
};

// An operation was invoked in a state that does not allow it.
class StateError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Checkpoint / config / report file problems.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad experiment or task configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace szo
