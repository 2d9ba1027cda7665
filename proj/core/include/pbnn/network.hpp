#ifndef PBNN_NETWORK_HPP
#define PBNN_NETWORK_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pbnn/cim_array.hpp"
#include "pbnn/prob.hpp"
#include "pbnn/rng.hpp"

namespace pbnn::net {

enum class LayerKind { Conv, MaxPool, FullyConnected, SignActivation, Softmax };

// Conv layers use valid padding and stride 1; pooling is 2x2 stride 2.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int out_channels = 0;  // Conv
    int kernel = 0;        // Conv
    int in = 0;            // FullyConnected
    int out = 0;           // FullyConnected
    // fan_in x fan_out Bernoulli parameters; conv fan-in is flattened
    // channel-major then row-major within the kernel window
    prob::ProbWeightMatrix p;

    bool has_weights() const {
        return kind == LayerKind::Conv || kind == LayerKind::FullyConnected;
    }

    static LayerSpec conv(int out_channels, int kernel);
    static LayerSpec max_pool();
    static LayerSpec fully_connected(int in, int out);
    static LayerSpec sign_activation();
    static LayerSpec softmax();
};

struct Shape3 {
    int c = 0, h = 0, w = 0;
    int size() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
};

struct Architecture {
    std::vector<LayerSpec> layers;
    Shape3 input{1, 28, 28};

    // Conv(32,3x3) -> MP -> Conv(64,3x3) -> MP -> FC(1600,256) -> FC(256,16)
    // -> FC(16,10) -> Softmax, weights initialized at p = 0.5
    static Architecture canonical();

    // indices of weighted layers, and their report names (CONV-1, FCN-2, ...)
    std::vector<int> weighted_layers() const;
    std::vector<std::string> weighted_layer_names() const;

    void validate() const;
};

struct OpCount {
    long long multiplies = 0;
    long long adds = 0;
    long long total_bit_ops = 0;
    long long parameters = 0;
};

// feature-map shape after each layer, starting from arch.input
std::vector<Shape3> trace_dims(const Architecture& arch);

// One MAC counts as one multiply plus one add; binary and full-precision
// networks are counted with the same convention.
OpCount count_ops(const Architecture& arch);

struct ArrayPlacement {
    int rows = 0;       // output channels per tile
    int cols = 0;       // patch elements per tile
    int tiles = 1;      // digital partial sums join the tiles
    int patch_size = 0; // C_in * k * k
};

ArrayPlacement map_conv_to_array(const LayerSpec& conv, int in_channels,
                                 int array_rows, int array_cols,
                                 bool allow_tiling = true);

// ---- inference ----

struct VoteResult {
    Eigen::VectorXd vote;  // mean one-hot over cycles, sums to 1
    int predicted = -1;    // argmax, lowest index on ties
};

struct ExpectationResult {
    Eigen::VectorXd final_mu;
    int predicted = -1;
    // deterministic bipolar outputs per weighted layer (post-pool for conv
    // blocks, post-sign for hidden FC, one-hot for the final layer)
    std::vector<Eigen::VectorXi> layer_bits;
};

// per-layer aggregates of a sampled run, aligned with weighted_layers()
struct LayerCapture {
    std::vector<Eigen::VectorXd> weight_p_hat;  // flattened like ProbWeightMatrix
    std::vector<Eigen::VectorXi> layer_bits;    // aggregated binary outputs
};

enum class HardwareMode {
    PerCycleBits,            // every cycle propagates its own bits end to end
    ProbabilityPropagation,  // aggregate each layer over cycles, binarize, move on
};

struct ForwardOptions {
    int cycles = 10;
    HardwareMode mode = HardwareMode::PerCycleBits;
    bool resample_per_patch = false;  // reprogram the array for every patch
};

// infinite-cycle limit: deterministic expectation propagation
ExpectationResult forward_expectation(const Architecture& arch, const Eigen::VectorXd& image);

// software sampling of every layer, one fresh weight draw per cycle
VoteResult forward_ideal(const Architecture& arch, const Eigen::VectorXd& image,
                         Rng& rng, int cycles);

// CONV-1 runs on the CIM array; downstream layers are sampled in software
VoteResult forward_hardware(const Architecture& arch, const Eigen::VectorXd& image,
                            cim::CimArray& conv1_array, Rng& rng,
                            const ForwardOptions& options,
                            LayerCapture* capture = nullptr);

// sampled run without hardware, with the same capture semantics (the ideal
// reference for the hardware/ideal comparisons)
VoteResult forward_sampled_ideal(const Architecture& arch, const Eigen::VectorXd& image,
                                 Rng& rng, const ForwardOptions& options,
                                 LayerCapture* capture = nullptr);

}  // namespace pbnn::net

#endif
