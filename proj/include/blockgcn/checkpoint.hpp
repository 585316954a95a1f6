#pragma once

#include <string>

#include "blockgcn/data.hpp"
#include "blockgcn/model.hpp"

namespace blockgcn {

// Single-file container ("BLOCKGCN-CKPT v1"): a text header with the model
// config, the skeleton edges, and the input modality, followed by every
// named parameter tensor in raw binary. Round trips are bit-identical.
void save_checkpoint(const std::string& path, const ModelState& state,
                     Modality modality = Modality::joint);

ModelState load_checkpoint(const std::string& path, Modality* modality = nullptr);

}  // namespace blockgcn
