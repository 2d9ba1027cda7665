#ifndef PBNN_MNIST_HPP
#define PBNN_MNIST_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pbnn::data {

// Images are stored one per column, scaled to [0,1] and quantized onto the
// 4-state input grid {0, 1/3, 2/3, 1} used by both training and the CIM DAC.
struct Dataset {
    Eigen::MatrixXf images;  // pixels x count
    std::vector<uint8_t> labels;

    int count() const { return static_cast<int>(images.cols()); }
    Eigen::VectorXd image_as_double(int index) const {
        return images.col(index).cast<double>();
    }
};

struct MnistData {
    Dataset train;
    Dataset test;
};

// Raw IDX containers (big-endian header, magic 0x803 / 0x801).
struct IdxImages {
    int count = 0, rows = 0, cols = 0;
    std::vector<uint8_t> pixels;  // row-major per image
};

IdxImages read_idx_images(const std::string& path);
std::vector<uint8_t> read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

float quantize_pixel(uint8_t raw, int levels = 4);
Dataset to_dataset(const IdxImages& images, const std::vector<uint8_t>& labels,
                   int levels = 4);

// expects the standard four files under dir
MnistData load_mnist(const std::string& dir, int levels = 4);

}  // namespace pbnn::data

#endif
