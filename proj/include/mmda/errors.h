/* Copyright 2026 The MMDA-ASR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MMDA_ERRORS_H_
#define MMDA_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mmda {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (non-scalar loss, empty target...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (rho outside (0,1), even kernel width...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Token or phoneme id outside its vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (feature files, manifests, lexicons).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint could not be restored.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Training hit a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmda

#endif  // MMDA_ERRORS_H_
