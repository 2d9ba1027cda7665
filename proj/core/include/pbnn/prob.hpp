#ifndef PBNN_PROB_HPP
#define PBNN_PROB_HPP

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "pbnn/rng.hpp"

namespace pbnn::prob {

// Matrix of Bernoulli parameters: p(i,j) is the probability that the bipolar
// weight feeding input i into output j equals +1. Rows index inputs, columns
// index outputs, so a sampled product is z_j = sum_i b(i,j) * x_i.
struct ProbWeightMatrix {
    Eigen::MatrixXd p;
    std::optional<int> quantization;  // level count Q when the grid is enforced

    ProbWeightMatrix() = default;
    explicit ProbWeightMatrix(Eigen::MatrixXd values,
                              std::optional<int> q = std::nullopt)
        : p(std::move(values)), quantization(q) {}

    static ProbWeightMatrix constant(Eigen::Index rows, Eigen::Index cols, double value);

    Eigen::Index rows() const { return p.rows(); }
    Eigen::Index cols() const { return p.cols(); }

    // throws std::invalid_argument when an entry leaves [0,1] or the grid
    void validate() const;
};

// A realized sample of the weight matrix; entries are exactly +1 or -1.
struct BipolarMatrix {
    Eigen::MatrixXd b;

    Eigen::Index rows() const { return b.rows(); }
    Eigen::Index cols() const { return b.cols(); }
};

struct PvmmStats {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma2;
};

// Multi-cycle aggregation of binarized outputs.
struct SampleAggregate {
    int cycles = 0;
    Eigen::VectorXi positive_counts;
    Eigen::VectorXd p_hat;
};

// The printed equation carries 1/n and 1/(n-1) prefactors; the hardware sums
// currents without normalization. Both views are exposed.
enum class StatsNorm { none, paper };

// Exact probability mass of z = sum_i b_i x_i over all 2^n weight outcomes.
struct PvmmDistribution {
    std::vector<std::pair<double, double>> mass;  // (z value, probability), z ascending

    double total() const;
    double mean() const;
    double variance() const;
    double prob_greater(double t) const;
};

// Draws one bipolar realization. Traversal is row-major so a given seed
// reproduces the same matrix on every run and thread layout.
BipolarMatrix sample_weights(const ProbWeightMatrix& p, Rng& rng);

// z_j = sum_i b(i,j) * x_i
Eigen::VectorXd pvmm_sample(const Eigen::VectorXd& x, const BipolarMatrix& b);

PvmmStats pvmm_stats(const Eigen::VectorXd& x, const ProbWeightMatrix& p,
                     StatsNorm norm = StatsNorm::none);

// out_j = 1 iff z_j > reference_j; the tie lands on 0
Eigen::VectorXi sign_binarize(const Eigen::VectorXd& z, const Eigen::VectorXd& reference);

// bit_streams: one row per cycle, one column per output neuron
SampleAggregate aggregate(const Eigen::MatrixXi& bit_streams);

PvmmDistribution enumerate_pvmm_distribution(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& p_row,
                                             int max_n = 20);

// Nearest point on the {k/(Q-1)} grid.
double quantize_level(double value, int levels);
ProbWeightMatrix quantize_weights(const ProbWeightMatrix& p, int levels = 4);

}  // namespace pbnn::prob

#endif
