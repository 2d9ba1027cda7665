#ifndef PBNN_ANALYTICS_HPP
#define PBNN_ANALYTICS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pbnn/device.hpp"
#include "pbnn/network.hpp"
#include "pbnn/rng.hpp"

namespace pbnn::exp {

struct Histogram {
    std::vector<double> edges;      // bins+1 ascending
    std::vector<long long> counts;  // per bin
    long long total = 0;
};

struct WeightErrorReport {
    Histogram hist;                  // of p_hat - p_true
    double fraction_below_02 = 0.0;  // |error| < 0.2
    double mse = 0.0;
    long long count = 0;
};

WeightErrorReport weight_error_histogram(const Eigen::VectorXd& p_true,
                                         const Eigen::VectorXd& p_hat, int bins = 41);

// flattened probabilities of every weighted layer, layer order then col-major
Eigen::VectorXd flatten_weights(const net::Architecture& arch);

// mean over weights of sqrt(p(1-p)/S)
double analytic_mean_weight_std(const Eigen::VectorXd& probs, int cycles);

// mean over weights of P(|Binom(S,p)/S - p| < threshold)
double analytic_fraction_within(const Eigen::VectorXd& probs, int cycles, double threshold);

// empirical counterpart of analytic_mean_weight_std: per weight, the sample
// std of Binom(S,p)/S over reps repetitions
double simulate_mean_weight_std(const Eigen::VectorXd& probs, int cycles, int reps,
                                uint64_t seed);

struct LayerReport {
    std::string name;
    double weight_mse = 0.0;         // p_hat vs ideal probability
    double output_error_rate = 0.0;  // Hamming rate of binary outputs
};

// both runs must come from identical inputs; layer order follows
// arch.weighted_layer_names()
std::vector<LayerReport> layer_mse_report(const net::Architecture& arch,
                                          const net::ExpectationResult& ideal,
                                          const net::LayerCapture& hardware);

struct CurvePoint {
    double v_wr = 0.0;
    double p_analytic = 0.0;
    double p_empirical = 0.0;
    double ci_low = 0.0;   // binomial normal-approximation 95% CI
    double ci_high = 0.0;
    int trials = 0;
};

std::vector<CurvePoint> device_curve(const device::SwitchingCurve& curve,
                                     const std::vector<double>& grid, int trials,
                                     uint64_t seed);

}  // namespace pbnn::exp

#endif
