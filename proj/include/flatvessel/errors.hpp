// Copyright 2026 The flatvessel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLATVESSEL_ERRORS_HPP
#define FLATVESSEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace flatvessel {

/// Raised when a caller breaks a documented precondition (sizes, ranges).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid model or scenario parameters. `field()` names the
/// offending entry so configuration errors can be reported precisely.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(double reached_time, const std::string& what)
      : std::runtime_error(what), reached_time_(reached_time) {}
  double reached_time() const noexcept { return reached_time_; }

 private:
  double reached_time_;
};

/// Goal cell cannot be reached from the start cell on the planning grid.
class UnreachableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flatvessel

#endif  // FLATVESSEL_ERRORS_HPP
