#pragma once

#include <string>

#include "acc/encoders.hpp"
#include "acc/numerics.hpp"

namespace acc {

// Everything needed to freeze and restore the model: the four encoders,
// optional heads, and optimizer state for both query stacks. Round trips are
// bit-exact (doubles stored verbatim).
struct Checkpoint {
    EncoderBundle bundle;
    AdamState adam_visual;
    AdamState adam_audio;
    std::uint64_t steps_taken = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

bool bundles_equal(const EncoderBundle& a, const EncoderBundle& b);

}  // namespace acc
