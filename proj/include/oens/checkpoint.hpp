#pragma once

#include <string>

#include "oens/ensemble.hpp"

namespace oens {

/// Binary checkpoint, little-endian throughout:
///   magic "OENS1"
///   u32  member count
///   per member:
///     u64 spec digest (FNV-1a of the canonical spec text)
///     u32 spec text length, spec text
///     u32 tensor count
///     per tensor: u32 name length, name, u32 rank, u64 dims..., f64 payload
/// Momentum buffers are not persisted; loading starts them at zero.
void save_ensemble(const Ensemble& ensemble, const std::string& path);

/// Throws IoError on bad magic, digest mismatch, or truncation.
Ensemble load_ensemble(const std::string& path);

}  // namespace oens
