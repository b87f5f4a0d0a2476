#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imt {

/// Tensor shapes that do not line up.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unsupported resolution, factor, or option.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (CSV rows, image files, sidecars).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside the intra or feature codec.
class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The external intra codec command failed; carries its captured output.
class ExternalCodecError : public CodecError {
 public:
  ExternalCodecError(const std::string& what, int status, std::string diagnostics)
      : CodecError(what), status_(status), diagnostics_(std::move(diagnostics)) {}
  int status() const { return status_; }
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  int status_;
  std::string diagnostics_;
};

/// Arithmetic decoding ran out of bytes.
class TruncatedPayloadError : public CodecError {
 public:
  explicit TruncatedPayloadError(std::size_t symbol_index)
      : CodecError("entropy payload truncated at symbol " + std::to_string(symbol_index)),
        symbol_index_(symbol_index) {}
  std::size_t symbol_index() const { return symbol_index_; }

 private:
  std::size_t symbol_index_;
};

/// Bitstream container errors. Each failure mode has its own code.
enum class BitstreamErrc {
  kTooShort,
  kBadMagic,
  kUnsupportedVersion,
  kUnknownFlags,
  kReservedNonzero,
  kHeaderChecksum,
  kInvalidField,
  kLengthMismatch,
  kModelHashMismatch,
  kCorruptResidual,
};

inline const char* to_string(BitstreamErrc c) {
  switch (c) {
    case BitstreamErrc::kTooShort: return "too short";
    case BitstreamErrc::kBadMagic: return "bad magic";
    case BitstreamErrc::kUnsupportedVersion: return "unsupported version";
    case BitstreamErrc::kUnknownFlags: return "unknown flags";
    case BitstreamErrc::kReservedNonzero: return "reserved bytes nonzero";
    case BitstreamErrc::kHeaderChecksum: return "header checksum mismatch";
    case BitstreamErrc::kInvalidField: return "invalid header field";
    case BitstreamErrc::kLengthMismatch: return "payload length mismatch";
    case BitstreamErrc::kModelHashMismatch: return "model hash mismatch";
    case BitstreamErrc::kCorruptResidual: return "corrupt residual";
  }
  return "unknown";
}

class BitstreamError : public std::runtime_error {
 public:
  BitstreamError(BitstreamErrc code, const std::string& detail)
      : std::runtime_error(std::string("bitstream: ") + to_string(code) + ": " + detail), code_(code) {}
  BitstreamErrc code() const { return code_; }

 private:
  BitstreamErrc code_;
};

}  // namespace imt
