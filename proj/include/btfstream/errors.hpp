#pragma once

#include <stdexcept>
#include <string>

namespace btfstream {

// Bad user-supplied values (CLI flags, out-of-range parameters).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated on-disk data.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wire-protocol violations (out-of-order chunks, sequence gaps, bad frames).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Socket-level failures.
struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation invoked before its inputs are ready (unpopulated tree, no
// evaluable level yet).
struct NotReadyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace btfstream
