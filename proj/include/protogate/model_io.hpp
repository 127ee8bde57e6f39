#pragma once

#include <filesystem>
#include <utility>

#include "protogate/model.hpp"

namespace protogate {

/// Writes params + hyperparams as one versioned JSON document. Doubles are
/// emitted in shortest round-trip form, so save/load is lossless and two
/// identical runs produce byte-identical files.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const Hyperparams& hp);

std::pair<ModelParams, Hyperparams> load_checkpoint(const std::filesystem::path& path);

}  // namespace protogate
