#pragma once

#include <string>

#include "model.hpp"

namespace gimo {

// Binary checkpoint: text header ("GIMO-CKPT v1", variant, architecture
// line, block count), then named parameter blocks with shapes and 64-bit
// little-endian reals. Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace gimo
