// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gvr
{

enum class ErrorKind
{
    EmptyTrace,
    InvalidStep,
    MalformedDialog,
    PlacementFailure,
    Precondition,
    OutOfBounds,
    MissingAnswer,
    ProposerFailure,
    NoTerminal,
    IncompatiblePaths,
    DegenerateBatch,
    Io,
    Parse,
};

/// Base error for everything the library throws. The kind lets callers (the CLI
/// in particular) map failures onto exit codes without string matching.
class Error: public std::runtime_error
{
  public:
    Error(ErrorKind kind, const std::string& what): std::runtime_error(what), _kind(kind) {}

    [[nodiscard]] auto kind() const noexcept -> ErrorKind { return _kind; }

  private:
    ErrorKind _kind;
};

[[nodiscard]] auto to_string(ErrorKind kind) -> const char*;

} // namespace gvr
