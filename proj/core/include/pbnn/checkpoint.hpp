#ifndef PBNN_CHECKPOINT_HPP
#define PBNN_CHECKPOINT_HPP

#include <string>

#include "pbnn/network.hpp"

namespace pbnn::net {

// Little-endian container: "PBNNCKPT" magic, format version, a deterministic-
// weights flag, the input shape, then per layer a kind/shape header followed
// (for weighted layers) by a quantization tag and row-major float64
// probability values.
void save_checkpoint(const Architecture& arch, const std::string& path,
                     bool deterministic_weights = false);

struct Checkpoint {
    Architecture arch;
    bool deterministic_weights = false;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace pbnn::net

#endif
