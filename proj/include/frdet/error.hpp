// Copyright 2026 The FRDet Authors. All Rights Reserved.
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

namespace frdet {

// Base for every error raised by the library. Subclasses map onto the
// failure categories the CLI turns into exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameters, mismatched shapes at build time, bad flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Text/binary input that does not follow its grammar. Carries a line number
// when one applies (0 otherwise).
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain of a function (e.g. variance <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced during a forward pass or loss evaluation.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace frdet
