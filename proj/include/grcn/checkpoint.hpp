#pragma once

#include <cstdint>
#include <string>

#include "grcn/gcn.hpp"

namespace grcn {

// A trained model plus what is needed to reattach it to its dataset: the
// training seed (the split is a pure function of graph and seed) and the
// digest of the id remapping.
struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    std::uint64_t id_digest = 0;
};

// Versioned binary container: magic + version, a JSON header describing
// hyperparameters and the tensor directory, then raw little-endian doubles.
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace grcn
