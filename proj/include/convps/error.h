/*
 * Copyright 2026 The ConvPS Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CONVPS_ERROR_H_
#define CONVPS_ERROR_H_

#include <stdexcept>
#include <string>

namespace convps {

// Bad caller input: unknown ids, malformed files, invalid configuration.
class InvalidArgument : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A referenced entity (user, item, session, slot) does not exist.
class NotFound : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Operation is valid in general but not in the current state.
class FailedPrecondition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace convps

#endif  // CONVPS_ERROR_H_
