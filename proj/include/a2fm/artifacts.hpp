#pragma once

#include <stdexcept>
#include <string>

#include "a2fm/models.hpp"
#include "a2fm/tensor.hpp"

namespace a2fm {

// Artifact I/O failures; callers that must react differently (e.g. the CLI
// distinguishing a missing checkpoint from a corrupt one) catch the
// subclasses.
struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingFileError : ArtifactError {
    using ArtifactError::ArtifactError;
};
struct BadMagicError : ArtifactError {
    using ArtifactError::ArtifactError;
};
struct VersionError : ArtifactError {
    using ArtifactError::ArtifactError;
};
struct TruncationError : ArtifactError {
    using ArtifactError::ArtifactError;
};

// Tensor file: "A2FM", format version as u16 LE, rank as u8, extents as
// u32 LE, payload as f32 LE in row-major order. Values are stored at f32
// precision; tensors that are already f32-representable round-trip
// bit-exactly.
void save_tensor(const std::string& path, const Tensor& tensor);
Tensor load_tensor(const std::string& path);

// Checkpoint file: "A2FMCKPT", version u16 LE, length-prefixed kind name,
// architecture extents (input_len, W, H, C, K, c1, c2, hidden), then the
// named parameter blocks in declared order, each as a length-prefixed name
// plus a tensor in the format above.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace a2fm
