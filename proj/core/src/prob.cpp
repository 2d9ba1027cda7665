#include "pbnn/prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pbnn::prob {

ProbWeightMatrix ProbWeightMatrix::constant(Eigen::Index rows, Eigen::Index cols,
                                            double value) {
    return ProbWeightMatrix(Eigen::MatrixXd::Constant(rows, cols, value));
}

void ProbWeightMatrix::validate() const {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double v = p(i, j);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("weight probability out of [0,1] at (" +
                                            std::to_string(i) + "," + std::to_string(j) +
                                            "): " + std::to_string(v));
            }
            if (quantization) {
                const double q = quantize_level(v, *quantization);
                if (std::abs(q - v) > 1e-12) {
                    throw std::invalid_argument("probability off the Q=" +
                                                std::to_string(*quantization) +
                                                " grid: " + std::to_string(v));
                }
            }
        }
    }
}

BipolarMatrix sample_weights(const ProbWeightMatrix& p, Rng& rng) {
    BipolarMatrix out;
    out.b.resize(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            out.b(i, j) = rng.bernoulli(p.p(i, j)) ? 1.0 : -1.0;
        }
    }
    return out;
}

Eigen::VectorXd pvmm_sample(const Eigen::VectorXd& x, const BipolarMatrix& b) {
    if (x.size() != b.rows()) {
        throw std::invalid_argument("pvmm_sample: input length " + std::to_string(x.size()) +
                                    " does not match weight rows " + std::to_string(b.rows()));
    }
    return b.b.transpose() * x;
}

PvmmStats pvmm_stats(const Eigen::VectorXd& x, const ProbWeightMatrix& p, StatsNorm norm) {
    if (x.size() != p.rows()) {
        throw std::invalid_argument("pvmm_stats: input length " + std::to_string(x.size()) +
                                    " does not match weight rows " + std::to_string(p.rows()));
    }
    PvmmStats s;
    // mu_j = sum_i (2 p_ij - 1) x_i,  sigma2_j = sum_i 4 p_ij (1 - p_ij) x_i^2.
    // Var(+-1 Bernoulli(p)) = 4 p (1 - p); the printed form with w(w-1) would be
    // negative, so the sign is taken from probability theory.
    s.mu = (2.0 * p.p.array() - 1.0).matrix().transpose() * x;
    const Eigen::VectorXd x2 = x.array().square().matrix();
    s.sigma2 = (4.0 * p.p.array() * (1.0 - p.p.array())).matrix().transpose() * x2;
    if (norm == StatsNorm::paper) {
        const double n = static_cast<double>(x.size());
        s.mu /= n;
        s.sigma2 /= (n > 1.0 ? n - 1.0 : 1.0);
    }
    return s;
}

Eigen::VectorXi sign_binarize(const Eigen::VectorXd& z, const Eigen::VectorXd& reference) {
    if (z.size() != reference.size()) {
        throw std::invalid_argument("sign_binarize: length mismatch");
    }
    Eigen::VectorXi out(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        out[j] = z[j] > reference[j] ? 1 : 0;
    }
    return out;
}

SampleAggregate aggregate(const Eigen::MatrixXi& bit_streams) {
    if (bit_streams.rows() < 1) {
        throw std::invalid_argument("aggregate: need at least one cycle");
    }
    SampleAggregate agg;
    agg.cycles = static_cast<int>(bit_streams.rows());
    agg.positive_counts = bit_streams.colwise().sum();
    agg.p_hat = agg.positive_counts.cast<double>() / static_cast<double>(agg.cycles);
    return agg;
}

double PvmmDistribution::total() const {
    double t = 0.0;
    for (const auto& [z, m] : mass) t += m;
    return t;
}

double PvmmDistribution::mean() const {
    double s = 0.0;
    for (const auto& [z, m] : mass) s += z * m;
    return s;
}

double PvmmDistribution::variance() const {
    const double mu = mean();
    double s = 0.0;
    for (const auto& [z, m] : mass) s += (z - mu) * (z - mu) * m;
    return s;
}

double PvmmDistribution::prob_greater(double t) const {
    double s = 0.0;
    for (const auto& [z, m] : mass) {
        if (z > t) s += m;
    }
    return s;
}

PvmmDistribution enumerate_pvmm_distribution(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& p_row, int max_n) {
    const int n = static_cast<int>(x.size());
    if (p_row.size() != n) {
        throw std::invalid_argument("enumerate_pvmm_distribution: length mismatch");
    }
    if (n > max_n) {
        throw std::length_error("enumerate_pvmm_distribution: n = " + std::to_string(n) +
                                " exceeds the 2^n capacity limit " + std::to_string(max_n));
    }
    PvmmDistribution dist;
    const uint64_t combos = 1ull << n;
    dist.mass.reserve(combos);
    for (uint64_t mask = 0; mask < combos; ++mask) {
        double z = 0.0;
        double prob = 1.0;
        for (int i = 0; i < n; ++i) {
            if (mask & (1ull << i)) {
                z += x[i];
                prob *= p_row[i];
            } else {
                z -= x[i];
                prob *= 1.0 - p_row[i];
            }
        }
        dist.mass.emplace_back(z, prob);
    }
    std::sort(dist.mass.begin(), dist.mass.end());
    // consolidate outcomes that land on the same z
    std::vector<std::pair<double, double>> merged;
    merged.reserve(dist.mass.size());
    for (const auto& [z, m] : dist.mass) {
        if (!merged.empty() && std::abs(merged.back().first - z) <= 1e-12) {
            merged.back().second += m;
        } else {
            merged.emplace_back(z, m);
        }
    }
    dist.mass = std::move(merged);
    return dist;
}

double quantize_level(double value, int levels) {
    if (levels < 2) throw std::invalid_argument("quantize_level: need at least 2 levels");
    const double steps = static_cast<double>(levels - 1);
    double q = std::round(std::clamp(value, 0.0, 1.0) * steps) / steps;
    return std::clamp(q, 0.0, 1.0);
}

ProbWeightMatrix quantize_weights(const ProbWeightMatrix& p, int levels) {
    ProbWeightMatrix out = p;
    for (Eigen::Index j = 0; j < out.p.cols(); ++j) {
        for (Eigen::Index i = 0; i < out.p.rows(); ++i) {
            out.p(i, j) = quantize_level(out.p(i, j), levels);
        }
    }
    out.quantization = levels;
    return out;
}

}  // namespace pbnn::prob
