#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtacnn/network.hpp"
#include "wtacnn/wta.hpp"

namespace wtacnn {

/// Serialized training state. The on-disk format is fixed: magic "WTAF",
/// u32 version, length-prefixed network spec text, then raw little-endian
/// 64-bit parameter blocks in layer order, conscience states, counters and
/// RNG/iterator state. save -> load roundtrips are byte-identical.
struct Checkpoint {
    std::uint32_t version = 1;
    std::string phase;  // pretrain | finetune | baseline
    NetworkSpec spec;
    std::vector<LayerParams> params;
    std::vector<ConscienceState> conscience;
    std::uint64_t iteration = 0;
    std::string trainer_rng;  // serialized engine state
    std::uint64_t iterator_seed = 0;
    std::uint64_t iterator_epoch = 0;
    std::uint64_t iterator_cursor = 0;

    static Checkpoint capture(const Network& net, const std::string& phase,
                              const std::vector<ConscienceState>& states,
                              std::uint64_t iteration);

    /// Materializes the stored network (all layers trainable; callers apply
    /// their own masks).
    Network restore_network() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wtacnn
