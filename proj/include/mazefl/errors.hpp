#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mazefl {

// Base of every error thrown by the library. `code()` is a stable,
// machine-readable identifier; the CLI serializes failures as
// {"error": code, "message": what} on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define MAZEFL_ERROR(Name)                                   \
    struct Name : Error {                                    \
        explicit Name(const std::string& message)            \
            : Error(#Name, message) {}                       \
    }

// Geometry / maze
MAZEFL_ERROR(InvalidMask);
MAZEFL_ERROR(InvalidSize);
MAZEFL_ERROR(OutOfBounds);

// LiDAR
MAZEFL_ERROR(PoseInsideObstacle);

// Dataset
MAZEFL_ERROR(EmptyClass);
MAZEFL_ERROR(EmptyDataset);

// Model / checkpoints
MAZEFL_ERROR(ShapeMismatch);

// Serialization and I/O
MAZEFL_ERROR(IoError);
MAZEFL_ERROR(FormatError);

// Federated protocol
MAZEFL_ERROR(ProtocolError);
MAZEFL_ERROR(Timeout);
MAZEFL_ERROR(ClientDisconnected);
MAZEFL_ERROR(ConnectionRefused);

// Bad arguments that are not covered by a more specific class above.
MAZEFL_ERROR(InvalidArgument);

#undef MAZEFL_ERROR

}  // namespace mazefl
