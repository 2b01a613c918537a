// Copyright 2026 The w2assim Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace w2assim {

enum class ErrorKind {
  // Input validation.
  NotSymmetric,
  NotPsd,
  NonFinite,
  DimMismatch,
  TooFewSamples,
  TooLarge,
  NotPositiveDefinite,
  InvalidArgument,
  InvalidScenario,
  // Numerical failure.
  EigenFailure,
  NegativeRadicand,
  SingularInnovation,
  DidNotConverge,
  InconsistentForms,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NotPsd: return "NotPsd";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::NegativeRadicand: return "NegativeRadicand";
    case ErrorKind::SingularInnovation: return "SingularInnovation";
    case ErrorKind::DidNotConverge: return "DidNotConverge";
    case ErrorKind::InconsistentForms: return "InconsistentForms";
  }
  return "Unknown";
}

/// True for failures of a numerical procedure on otherwise valid input.
constexpr bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::EigenFailure ||
         kind == ErrorKind::NegativeRadicand ||
         kind == ErrorKind::SingularInnovation ||
         kind == ErrorKind::DidNotConverge ||
         kind == ErrorKind::InconsistentForms;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

inline void require_dims(long a, long b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::DimMismatch, std::string(what) + " (" +
                                            std::to_string(a) + " vs " +
                                            std::to_string(b) + ")");
  }
}

}  // namespace detail
}  // namespace w2assim
