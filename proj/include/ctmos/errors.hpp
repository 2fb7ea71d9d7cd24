#pragma once

#include <stdexcept>
#include <string>

namespace ctmos {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint I/O failures carry a kind so callers can distinguish them.
struct CheckpointError : std::runtime_error {
  enum class Kind { BadMagic, Version, Digest, Truncated, Io };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace ctmos
