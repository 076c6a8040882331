#pragma once

#include <stdexcept>
#include <string>

namespace kq {

// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or unreadable input: bad files, bad arguments, invalid shapes.
// The CLI maps these to exit code 2.
class InputError : public Error {
public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// A KQT/KQZ byte stream that fails validation.
class FormatError : public InputError {
public:
  explicit FormatError(const std::string& what) : InputError(what) {}
};

} // namespace kq
