/*
 * Copyright 2026 The semloc Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace semloc {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's signature.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A primitive produced NaN/Inf, or a strict-mode guard tripped.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// Malformed input file (carries line/field context in the message).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A domain invariant is violated (dangling ids, bad splits, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace semloc
