#include "pbnn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pbnn::net {

namespace {

constexpr char kMagic[8] = {'P', 'B', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_i32(std::ofstream& f, int32_t v) { put_u32(f, static_cast<uint32_t>(v)); }

void put_f64(std::ofstream& f, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(bits >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::ifstream& f, const std::string& path) {
    uint8_t b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("truncated checkpoint: " + path);
    }
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

int32_t get_i32(std::ifstream& f, const std::string& path) {
    return static_cast<int32_t>(get_u32(f, path));
}

double get_f64(std::ifstream& f, const std::string& path) {
    uint8_t b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("truncated checkpoint: " + path);
    }
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const Architecture& arch, const std::string& path,
                     bool deterministic_weights) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(kMagic, 8);
    put_u32(f, kVersion);
    put_u32(f, deterministic_weights ? 1 : 0);
    put_i32(f, arch.input.c);
    put_i32(f, arch.input.h);
    put_i32(f, arch.input.w);
    put_u32(f, static_cast<uint32_t>(arch.layers.size()));
    for (const auto& l : arch.layers) {
        put_u32(f, static_cast<uint32_t>(l.kind));
        put_i32(f, l.out_channels);
        put_i32(f, l.kernel);
        put_i32(f, l.in);
        put_i32(f, l.out);
        if (!l.has_weights()) continue;
        put_i32(f, static_cast<int32_t>(l.p.rows()));
        put_i32(f, static_cast<int32_t>(l.p.cols()));
        put_i32(f, l.p.quantization ? *l.p.quantization : -1);
        for (Eigen::Index i = 0; i < l.p.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.p.cols(); ++j) put_f64(f, l.p.p(i, j));
        }
    }
    if (!f) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("not a PBNN checkpoint: " + path);
    }
    const uint32_t version = get_u32(f, path);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version in " + path);
    }
    Checkpoint ckpt;
    ckpt.deterministic_weights = get_u32(f, path) != 0;
    ckpt.arch.input.c = get_i32(f, path);
    ckpt.arch.input.h = get_i32(f, path);
    ckpt.arch.input.w = get_i32(f, path);
    const uint32_t n_layers = get_u32(f, path);
    ckpt.arch.layers.resize(n_layers);
    for (auto& l : ckpt.arch.layers) {
        l.kind = static_cast<LayerKind>(get_u32(f, path));
        l.out_channels = get_i32(f, path);
        l.kernel = get_i32(f, path);
        l.in = get_i32(f, path);
        l.out = get_i32(f, path);
        if (!l.has_weights()) continue;
        const int rows = get_i32(f, path);
        const int cols = get_i32(f, path);
        const int q = get_i32(f, path);
        l.p.p.resize(rows, cols);
        if (q >= 0) l.p.quantization = q;
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) l.p.p(i, j) = get_f64(f, path);
        }
    }
    ckpt.arch.validate();
    return ckpt;
}

}  // namespace pbnn::net
