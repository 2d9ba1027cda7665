#include "pbnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pbnn::net {

namespace {

// feature maps travel as (channels x h*w), spatial index = y*w + x

Eigen::MatrixXd im2col(const Eigen::MatrixXd& in, int h, int w, int k) {
    const int c = static_cast<int>(in.rows());
    const int ho = h - k + 1;
    const int wo = w - k + 1;
    Eigen::MatrixXd patches(c * k * k, ho * wo);
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            const int col = y * wo + x;
            for (int ch = 0; ch < c; ++ch) {
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        patches(ch * k * k + dy * k + dx, col) =
                            in(ch, (y + dy) * w + (x + dx));
                    }
                }
            }
        }
    }
    return patches;
}

Eigen::MatrixXd max_pool2(const Eigen::MatrixXd& in, int h, int w) {
    const int c = static_cast<int>(in.rows());
    const int ho = h / 2;
    const int wo = w / 2;
    Eigen::MatrixXd out(c, ho * wo);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                const double a = in(ch, (2 * y) * w + 2 * x);
                const double b = in(ch, (2 * y) * w + 2 * x + 1);
                const double d = in(ch, (2 * y + 1) * w + 2 * x);
                const double e = in(ch, (2 * y + 1) * w + 2 * x + 1);
                out(ch, y * wo + x) = std::max(std::max(a, b), std::max(d, e));
            }
        }
    }
    return out;
}

Eigen::MatrixXd binarize_pm1(const Eigen::MatrixXd& in) {
    return ((in.array() > 0.0).cast<double>() * 2.0 - 1.0).matrix();
}

// 0/1 flattened copy of a +-1 map, channel-major
Eigen::VectorXi to_bits(const Eigen::MatrixXd& pm1) {
    Eigen::VectorXi bits(pm1.size());
    int idx = 0;
    for (int ch = 0; ch < pm1.rows(); ++ch) {
        for (int pos = 0; pos < pm1.cols(); ++pos) {
            bits[idx++] = pm1(ch, pos) > 0.0 ? 1 : 0;
        }
    }
    return bits;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& map) {
    Eigen::VectorXd v(map.size());
    int idx = 0;
    for (int ch = 0; ch < map.rows(); ++ch) {
        for (int pos = 0; pos < map.cols(); ++pos) v[idx++] = map(ch, pos);
    }
    return v;
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

// Bernoulli draw into a preallocated +-1 matrix; exact endpoints skip the
// stream so saturated weights cost nothing
void sample_into(const prob::ProbWeightMatrix& p, Rng& rng, Eigen::MatrixXd& b) {
    b.resize(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double prob = p.p(i, j);
            if (prob <= 0.0) {
                b(i, j) = -1.0;
            } else if (prob >= 1.0) {
                b(i, j) = 1.0;
            } else {
                b(i, j) = rng.bernoulli(prob) ? 1.0 : -1.0;
            }
        }
    }
}

}  // namespace

LayerSpec LayerSpec::conv(int out_channels, int kernel) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.out_channels = out_channels;
    l.kernel = kernel;
    return l;
}

LayerSpec LayerSpec::max_pool() {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    return l;
}

LayerSpec LayerSpec::fully_connected(int in, int out) {
    LayerSpec l;
    l.kind = LayerKind::FullyConnected;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::sign_activation() {
    LayerSpec l;
    l.kind = LayerKind::SignActivation;
    return l;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
}

Architecture Architecture::canonical() {
    Architecture arch;
    arch.input = {1, 28, 28};
    arch.layers = {
        LayerSpec::conv(32, 3), LayerSpec::max_pool(),
        LayerSpec::conv(64, 3), LayerSpec::max_pool(),
        LayerSpec::fully_connected(1600, 256),
        LayerSpec::fully_connected(256, 16),
        LayerSpec::fully_connected(16, 10),
        LayerSpec::softmax(),
    };
    const auto dims = trace_dims(arch);
    int in_c = arch.input.c;
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        auto& l = arch.layers[i];
        if (l.kind == LayerKind::Conv) {
            l.p = prob::ProbWeightMatrix::constant(in_c * l.kernel * l.kernel,
                                                   l.out_channels, 0.5);
        } else if (l.kind == LayerKind::FullyConnected) {
            l.p = prob::ProbWeightMatrix::constant(l.in, l.out, 0.5);
        }
        in_c = dims[i].c;
    }
    return arch;
}

std::vector<int> Architecture::weighted_layers() const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        if (layers[i].has_weights()) idx.push_back(i);
    }
    return idx;
}

std::vector<std::string> Architecture::weighted_layer_names() const {
    std::vector<std::string> names;
    int conv = 0, fc = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) names.push_back("CONV-" + std::to_string(++conv));
        if (l.kind == LayerKind::FullyConnected) names.push_back("FCN-" + std::to_string(++fc));
    }
    return names;
}

void Architecture::validate() const {
    trace_dims(*this);
    for (const auto& l : layers) {
        if (l.has_weights()) l.p.validate();
    }
}

std::vector<Shape3> trace_dims(const Architecture& arch) {
    std::vector<Shape3> dims;
    Shape3 cur = arch.input;
    for (const auto& l : arch.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur.h < l.kernel || cur.w < l.kernel) {
                    throw std::invalid_argument("conv kernel larger than the feature map");
                }
                if (l.has_weights() && l.p.p.size() > 0 &&
                    (l.p.rows() != cur.c * l.kernel * l.kernel || l.p.cols() != l.out_channels)) {
                    throw std::invalid_argument("conv weight shape mismatch");
                }
                cur = {l.out_channels, cur.h - l.kernel + 1, cur.w - l.kernel + 1};
                break;
            }
            case LayerKind::MaxPool: {
                if (cur.h < 2 || cur.w < 2) {
                    throw std::invalid_argument("max-pool needs at least a 2x2 map");
                }
                cur = {cur.c, cur.h / 2, cur.w / 2};
                break;
            }
            case LayerKind::FullyConnected: {
                if (cur.size() != l.in) {
                    throw std::invalid_argument("fully-connected input size mismatch: have " +
                                                std::to_string(cur.size()) + ", spec says " +
                                                std::to_string(l.in));
                }
                if (l.p.p.size() > 0 && (l.p.rows() != l.in || l.p.cols() != l.out)) {
                    throw std::invalid_argument("fully-connected weight shape mismatch");
                }
                cur = {l.out, 1, 1};
                break;
            }
            case LayerKind::SignActivation:
            case LayerKind::Softmax:
                break;
        }
        dims.push_back(cur);
    }
    return dims;
}

OpCount count_ops(const Architecture& arch) {
    OpCount ops;
    Shape3 cur = arch.input;
    for (const auto& l : arch.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                const Shape3 next{l.out_channels, cur.h - l.kernel + 1, cur.w - l.kernel + 1};
                const long long macs = 1ll * next.h * next.w * l.out_channels * cur.c *
                                       l.kernel * l.kernel;
                ops.multiplies += macs;
                ops.adds += macs;
                ops.parameters += 1ll * cur.c * l.kernel * l.kernel * l.out_channels;
                cur = next;
                break;
            }
            case LayerKind::FullyConnected: {
                const long long macs = 1ll * l.in * l.out;
                ops.multiplies += macs;
                ops.adds += macs;
                ops.parameters += macs;
                cur = {l.out, 1, 1};
                break;
            }
            case LayerKind::MaxPool:
                cur = {cur.c, cur.h / 2, cur.w / 2};
                break;
            case LayerKind::SignActivation:
            case LayerKind::Softmax:
                break;
        }
    }
    ops.total_bit_ops = ops.multiplies + ops.adds;
    return ops;
}

ArrayPlacement map_conv_to_array(const LayerSpec& conv, int in_channels, int array_rows,
                                 int array_cols, bool allow_tiling) {
    if (conv.kind != LayerKind::Conv) {
        throw std::invalid_argument("map_conv_to_array: layer is not a convolution");
    }
    (void)array_rows;
    ArrayPlacement placement;
    placement.patch_size = in_channels * conv.kernel * conv.kernel;
    placement.rows = conv.out_channels;
    if (placement.patch_size <= array_cols) {
        placement.cols = placement.patch_size;
        placement.tiles = 1;
        return placement;
    }
    if (!allow_tiling) {
        throw std::length_error("map_conv_to_array: patch size " +
                                std::to_string(placement.patch_size) +
                                " exceeds the array width and tiling is disabled");
    }
    placement.cols = array_cols;
    placement.tiles = (placement.patch_size + array_cols - 1) / array_cols;
    return placement;
}

// ---------------------------------------------------------------------------
// sampled dataflow

namespace {

struct StageIo {
    Eigen::MatrixXd value;  // (channels x positions); real for the image, +-1 after
    int h = 0, w = 0;
};

// One weighted block: the weighted layer plus an immediately following pool.
struct Block {
    int layer_index = -1;
    const LayerSpec* layer = nullptr;
    bool pooled = false;
    bool final_block = false;
    int in_c = 0, in_h = 0, in_w = 0;
};

std::vector<Block> split_blocks(const Architecture& arch) {
    const auto dims = trace_dims(arch);
    std::vector<Block> blocks;
    Shape3 cur = arch.input;
    for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
        const auto& l = arch.layers[i];
        if (l.kind == LayerKind::SignActivation) {
            throw std::invalid_argument(
                "sampled forward: binarization is built into the dataflow; "
                "explicit sign layers are not supported here");
        }
        if (l.has_weights()) {
            Block b;
            b.layer_index = i;
            b.layer = &l;
            b.in_c = cur.c;
            b.in_h = cur.h;
            b.in_w = cur.w;
            if (i + 1 < static_cast<int>(arch.layers.size()) &&
                arch.layers[i + 1].kind == LayerKind::MaxPool) {
                b.pooled = true;
            }
            blocks.push_back(b);
        }
        cur = dims[i];
    }
    if (blocks.empty()) throw std::invalid_argument("architecture has no weighted layers");
    blocks.back().final_block = true;
    return blocks;
}

// raw pre-activations of one sampled block: (out x positions)
Eigen::MatrixXd block_preact(const Block& blk, const Eigen::MatrixXd& b,
                             const StageIo& in) {
    if (blk.layer->kind == LayerKind::Conv) {
        const Eigen::MatrixXd patches = im2col(in.value, in.h, in.w, blk.layer->kernel);
        return b.transpose() * patches;
    }
    return b.transpose() * flatten(in.value);
}

StageIo image_stage(const Architecture& arch, const Eigen::VectorXd& image) {
    if (image.size() != arch.input.size()) {
        throw std::invalid_argument("forward: image size " + std::to_string(image.size()) +
                                    " does not match the input shape");
    }
    StageIo io;
    io.h = arch.input.h;
    io.w = arch.input.w;
    io.value = Eigen::Map<const Eigen::MatrixXd>(image.data(), arch.input.h * arch.input.w,
                                                 arch.input.c)
                   .transpose();
    return io;
}

}  // namespace

ExpectationResult forward_expectation(const Architecture& arch, const Eigen::VectorXd& image) {
    const auto blocks = split_blocks(arch);
    ExpectationResult res;
    StageIo cur = image_stage(arch, image);
    for (const auto& blk : blocks) {
        if (blk.layer->p.p.size() == 0) {
            throw std::invalid_argument("forward: layer weights are unset");
        }
        const Eigen::MatrixXd w_eff = (2.0 * blk.layer->p.p.array() - 1.0).matrix();
        Eigen::MatrixXd mu = block_preact(blk, w_eff, cur);
        int h = blk.layer->kind == LayerKind::Conv ? blk.in_h - blk.layer->kernel + 1 : 1;
        int w = blk.layer->kind == LayerKind::Conv ? blk.in_w - blk.layer->kernel + 1 : 1;
        if (blk.pooled) {
            mu = max_pool2(mu, h, w);
            h /= 2;
            w /= 2;
        }
        if (blk.final_block) {
            res.final_mu = flatten(mu);
            res.predicted = argmax_lowest(res.final_mu);
            Eigen::VectorXi onehot = Eigen::VectorXi::Zero(res.final_mu.size());
            onehot[res.predicted] = 1;
            res.layer_bits.push_back(onehot);
        } else {
            cur.value = binarize_pm1(mu);
            cur.h = h;
            cur.w = w;
            res.layer_bits.push_back(to_bits(cur.value));
        }
    }
    return res;
}

namespace {

// Supplies per-cycle bipolar weight realizations for one block, either from
// software sampling or from the CIM array, and accumulates weight p-hat.
struct BlockSampler {
    const Block* blk = nullptr;
    cim::CimArray* array = nullptr;  // CONV-1 on hardware when set
    bool resample_per_patch = false;
    Eigen::MatrixXd b;          // current realization (software path)
    Eigen::MatrixXd p_hat_sum;  // counts of +1 per weight

    void init(const Block& block, cim::CimArray* hw, bool per_patch) {
        blk = &block;
        array = hw;
        resample_per_patch = per_patch;
        p_hat_sum = Eigen::MatrixXd::Zero(block.layer->p.rows(), block.layer->p.cols());
    }

    // fresh realization for a new cycle
    void sample_cycle(Rng& rng) {
        if (array) {
            array->reset_all();
            array->program_weights(blk->layer->p, rng);
            p_hat_sum += array->state_matrix().transpose().cast<double>();
        } else {
            sample_into(blk->layer->p, rng, b);
            p_hat_sum += ((b.array() + 1.0) * 0.5).matrix();
        }
    }

    // pre-activation bits for this cycle: (out x positions), entries 0/1
    Eigen::MatrixXi bits(const StageIo& in, Rng& rng) {
        if (!array) {
            const Eigen::MatrixXd z = block_preact(*blk, b, in);
            return (z.array() > 0.0).cast<int>().matrix();
        }
        Eigen::MatrixXi out;
        run_array(in, rng, &out, nullptr);
        return out;
    }

    // real-valued pre-activations; on hardware this is the loader voltage
    // relative to the reference (the argmax of the final layer is taken on
    // PVMM voltages)
    Eigen::MatrixXd preact(const StageIo& in, Rng& rng) {
        if (!array) return block_preact(*blk, b, in);
        Eigen::MatrixXd out;
        run_array(in, rng, nullptr, &out);
        return out;
    }

private:
    void run_array(const StageIo& in, Rng& rng, Eigen::MatrixXi* bits_out,
                   Eigen::MatrixXd* z_out) {
        const bool conv = blk->layer->kind == LayerKind::Conv;
        Eigen::MatrixXd patches;
        if (conv) {
            patches = im2col(in.value, in.h, in.w, blk->layer->kernel);
        } else {
            patches = flatten(in.value);
        }
        const int positions = static_cast<int>(patches.cols());
        const int m = static_cast<int>(blk->layer->p.cols());
        if (bits_out) bits_out->resize(m, positions);
        if (z_out) z_out->resize(m, positions);
        std::vector<double> levels(patches.rows());
        for (int pos = 0; pos < positions; ++pos) {
            for (Eigen::Index i = 0; i < patches.rows(); ++i) levels[i] = patches(i, pos);
            const auto readout = resample_per_patch
                                     ? array->run_sampling_cycle(blk->layer->p, levels, rng)
                                     : array->accumulate(levels, rng);
            if (bits_out) bits_out->col(pos) = readout.bits;
            if (z_out) z_out->col(pos) = readout.v_rwl.array() - readout.v_rwld;
        }
    }
};

Eigen::MatrixXd pool_or_keep(const Eigen::MatrixXd& m, bool pooled, int& h, int& w) {
    if (!pooled) return m;
    Eigen::MatrixXd out = max_pool2(m, h, w);
    h /= 2;
    w /= 2;
    return out;
}

VoteResult sampled_forward(const Architecture& arch, const Eigen::VectorXd& image,
                           cim::CimArray* conv1_array, Rng& rng,
                           const ForwardOptions& opt, LayerCapture* capture) {
    if (opt.cycles < 1) throw std::invalid_argument("forward: cycles must be >= 1");
    const auto blocks = split_blocks(arch);
    std::vector<BlockSampler> samplers(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].layer->p.p.size() == 0) {
            throw std::invalid_argument("forward: layer weights are unset");
        }
        samplers[i].init(blocks[i], i == 0 && conv1_array ? conv1_array : nullptr,
                         opt.resample_per_patch);
    }
    const int n_classes = static_cast<int>(blocks.back().layer->p.cols());
    VoteResult res;
    res.vote = Eigen::VectorXd::Zero(n_classes);

    const StageIo input = image_stage(arch, image);
    const double inv_s = 1.0 / opt.cycles;

    if (opt.mode == HardwareMode::PerCycleBits) {
        std::vector<Eigen::MatrixXd> bit_accum(blocks.size());
        for (int s = 0; s < opt.cycles; ++s) {
            StageIo cur = input;
            for (size_t bi = 0; bi < blocks.size(); ++bi) {
                const auto& blk = blocks[bi];
                samplers[bi].sample_cycle(rng);
                if (blk.final_block) {
                    const Eigen::MatrixXd z = samplers[bi].preact(cur, rng);
                    res.vote[argmax_lowest(flatten(z))] += inv_s;
                    break;
                }
                Eigen::MatrixXd pm1 =
                    (samplers[bi].bits(cur, rng).cast<double>().array() * 2.0 - 1.0).matrix();
                int h = blk.layer->kind == LayerKind::Conv ? blk.in_h - blk.layer->kernel + 1 : 1;
                int w = blk.layer->kind == LayerKind::Conv ? blk.in_w - blk.layer->kernel + 1 : 1;
                pm1 = pool_or_keep(pm1, blk.pooled, h, w);
                if (capture) {
                    if (bit_accum[bi].size() == 0) {
                        bit_accum[bi] = Eigen::MatrixXd::Zero(pm1.rows(), pm1.cols());
                    }
                    bit_accum[bi] += (pm1.array() > 0.0).cast<double>().matrix();
                }
                cur.value = std::move(pm1);
                cur.h = h;
                cur.w = w;
            }
        }
        if (capture) {
            for (size_t bi = 0; bi + 1 < blocks.size(); ++bi) {
                const Eigen::MatrixXd mean = bit_accum[bi] * inv_s;
                capture->layer_bits.push_back(
                    to_bits(((mean.array() > 0.5).cast<double>() * 2.0 - 1.0).matrix()));
            }
        }
    } else {
        // probability propagation: finish each block over all cycles first
        StageIo cur = input;
        for (size_t bi = 0; bi < blocks.size(); ++bi) {
            const auto& blk = blocks[bi];
            if (blk.final_block) {
                for (int s = 0; s < opt.cycles; ++s) {
                    samplers[bi].sample_cycle(rng);
                    const Eigen::MatrixXd z = samplers[bi].preact(cur, rng);
                    res.vote[argmax_lowest(flatten(z))] += inv_s;
                }
                break;
            }
            Eigen::MatrixXd bit_sum;
            for (int s = 0; s < opt.cycles; ++s) {
                samplers[bi].sample_cycle(rng);
                const Eigen::MatrixXi bits = samplers[bi].bits(cur, rng);
                if (bit_sum.size() == 0) bit_sum = Eigen::MatrixXd::Zero(bits.rows(), bits.cols());
                bit_sum += bits.cast<double>();
            }
            Eigen::MatrixXd q = bit_sum * inv_s;  // per-neuron sign probability
            int h = blk.layer->kind == LayerKind::Conv ? blk.in_h - blk.layer->kernel + 1 : 1;
            int w = blk.layer->kind == LayerKind::Conv ? blk.in_w - blk.layer->kernel + 1 : 1;
            q = pool_or_keep(q, blk.pooled, h, w);
            // binarization threshold on probabilities: > 0.5 is +1, ties fall to -1
            cur.value = ((q.array() > 0.5).cast<double>() * 2.0 - 1.0).matrix();
            cur.h = h;
            cur.w = w;
            if (capture) capture->layer_bits.push_back(to_bits(cur.value));
        }
    }

    res.predicted = argmax_lowest(res.vote);
    if (capture) {
        Eigen::VectorXi onehot = Eigen::VectorXi::Zero(n_classes);
        onehot[res.predicted] = 1;
        capture->layer_bits.push_back(onehot);
        for (auto& s : samplers) {
            capture->weight_p_hat.push_back(
                Eigen::Map<const Eigen::VectorXd>(s.p_hat_sum.data(), s.p_hat_sum.size()) *
                inv_s);
        }
    }
    return res;
}

}  // namespace

VoteResult forward_ideal(const Architecture& arch, const Eigen::VectorXd& image, Rng& rng,
                         int cycles) {
    ForwardOptions opt;
    opt.cycles = cycles;
    opt.mode = HardwareMode::PerCycleBits;
    return sampled_forward(arch, image, nullptr, rng, opt, nullptr);
}

VoteResult forward_hardware(const Architecture& arch, const Eigen::VectorXd& image,
                            cim::CimArray& conv1_array, Rng& rng,
                            const ForwardOptions& options, LayerCapture* capture) {
    return sampled_forward(arch, image, &conv1_array, rng, options, capture);
}

VoteResult forward_sampled_ideal(const Architecture& arch, const Eigen::VectorXd& image,
                                 Rng& rng, const ForwardOptions& options,
                                 LayerCapture* capture) {
    return sampled_forward(arch, image, nullptr, rng, options, capture);
}

}  // namespace pbnn::net
