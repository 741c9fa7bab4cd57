// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nxt {

/// Invalid argument, shape, or configuration value.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation attempted on an object in the wrong state (e.g. a full decode cache).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Internal invariant violated by data handed across module boundaries.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable/unwritable file or malformed container.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void throw_parameter(const std::string& what) { throw ParameterError(what); }

}  // namespace detail

#define NXT_REQUIRE(cond, msg)                                   \
  do {                                                           \
    if (!(cond)) ::nxt::detail::throw_parameter(std::string(msg)); \
  } while (0)

}  // namespace nxt
