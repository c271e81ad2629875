// Copyright 2026 The xmoe Authors.
//
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

namespace xmoe {

/// Root of every error thrown by the library. The CLI maps subclasses onto
/// process exit codes (see tools/main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define XMOE_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

XMOE_DEFINE_ERROR(DimensionError);   // shape mismatch or empty where non-empty required
XMOE_DEFINE_ERROR(DomainError);      // non-finite values, non-positive variance
XMOE_DEFINE_ERROR(ContractError);    // API misuse (e.g. backward on non-scalar)
XMOE_DEFINE_ERROR(LookupError);      // id outside an embedding table
XMOE_DEFINE_ERROR(RoutingError);     // gate index out of range
XMOE_DEFINE_ERROR(ContextError);     // sequence longer than the context window
XMOE_DEFINE_ERROR(ConfigError);
XMOE_DEFINE_ERROR(DataError);
XMOE_DEFINE_ERROR(IoError);
XMOE_DEFINE_ERROR(TrainingError);
XMOE_DEFINE_ERROR(SequencingError);  // stage run out of order, missing checkpoint
XMOE_DEFINE_ERROR(MetricError);
XMOE_DEFINE_ERROR(InitializationError);

#undef XMOE_DEFINE_ERROR

}  // namespace xmoe
