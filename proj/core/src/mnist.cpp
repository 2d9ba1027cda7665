#include "pbnn/mnist.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pbnn::data {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be32(std::ifstream& f, const std::string& path) {
    uint8_t buf[4];
    if (!f.read(reinterpret_cast<char*>(buf), 4)) {
        throw std::runtime_error("truncated IDX header in " + path);
    }
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
           uint32_t(buf[3]);
}

void write_be32(std::ofstream& f, uint32_t v) {
    const uint8_t buf[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
    f.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const uint32_t magic = read_be32(f, path);
    if (magic != kImageMagic) {
        throw std::runtime_error("bad IDX image magic in " + path);
    }
    IdxImages out;
    out.count = static_cast<int>(read_be32(f, path));
    out.rows = static_cast<int>(read_be32(f, path));
    out.cols = static_cast<int>(read_be32(f, path));
    const size_t n = size_t(out.count) * out.rows * out.cols;
    out.pixels.resize(n);
    if (!f.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(n))) {
        throw std::runtime_error("truncated IDX image data in " + path);
    }
    return out;
}

std::vector<uint8_t> read_idx_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const uint32_t magic = read_be32(f, path);
    if (magic != kLabelMagic) {
        throw std::runtime_error("bad IDX label magic in " + path);
    }
    const uint32_t count = read_be32(f, path);
    std::vector<uint8_t> labels(count);
    if (!f.read(reinterpret_cast<char*>(labels.data()), count)) {
        throw std::runtime_error("truncated IDX label data in " + path);
    }
    return labels;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_be32(f, kImageMagic);
    write_be32(f, static_cast<uint32_t>(images.count));
    write_be32(f, static_cast<uint32_t>(images.rows));
    write_be32(f, static_cast<uint32_t>(images.cols));
    f.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_be32(f, kLabelMagic);
    write_be32(f, static_cast<uint32_t>(labels.size()));
    f.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

float quantize_pixel(uint8_t raw, int levels) {
    const float steps = static_cast<float>(levels - 1);
    return std::round(static_cast<float>(raw) / 255.0f * steps) / steps;
}

Dataset to_dataset(const IdxImages& images, const std::vector<uint8_t>& labels, int levels) {
    if (images.count != static_cast<int>(labels.size())) {
        throw std::runtime_error("image/label count mismatch: " + std::to_string(images.count) +
                                 " images vs " + std::to_string(labels.size()) + " labels");
    }
    const int pixels = images.rows * images.cols;
    Dataset ds;
    ds.images.resize(pixels, images.count);
    for (int i = 0; i < images.count; ++i) {
        for (int px = 0; px < pixels; ++px) {
            ds.images(px, i) = quantize_pixel(images.pixels[size_t(i) * pixels + px], levels);
        }
    }
    ds.labels = labels;
    return ds;
}

MnistData load_mnist(const std::string& dir, int levels) {
    MnistData data;
    data.train = to_dataset(read_idx_images(dir + "/train-images-idx3-ubyte"),
                            read_idx_labels(dir + "/train-labels-idx1-ubyte"), levels);
    data.test = to_dataset(read_idx_images(dir + "/t10k-images-idx3-ubyte"),
                           read_idx_labels(dir + "/t10k-labels-idx1-ubyte"), levels);
    return data;
}

}  // namespace pbnn::data
