#ifndef PBNN_EXPERIMENTS_HPP
#define PBNN_EXPERIMENTS_HPP

#include <string>
#include <vector>

#include "pbnn/analytics.hpp"
#include "pbnn/config.hpp"
#include "pbnn/mnist.hpp"
#include "pbnn/network.hpp"

namespace pbnn::exp {

// full hardware pipeline accuracy over ds[0, subset)
double hardware_accuracy(const net::Architecture& model, const cim::ArrayConfig& array_cfg,
                         const data::Dataset& ds, int subset,
                         const net::ForwardOptions& options, uint64_t seed);

struct CycleSweepRow {
    int cycles = 0;
    double accuracy = 0.0;
    double mean_weight_std = 0.0;       // simulated "weight variation"
    double error_times_cycles = 0.0;    // (baseline - accuracy) * cycles
};

struct SweepCyclesResult {
    std::vector<CycleSweepRow> rows;
    double baseline_accuracy = 0.0;  // the model's own infinite-cycle accuracy
    int argmin_cycles = 0;           // grid point minimizing the product
};

SweepCyclesResult sweep_cycles(const net::Architecture& model,
                               const cim::ArrayConfig& array_cfg, const data::Dataset& ds,
                               int subset, const std::vector<int>& grid,
                               net::HardwareMode mode, uint64_t seed);

struct SingleImageAnalysis {
    net::ExpectationResult ideal;
    net::LayerCapture hardware;
    std::vector<LayerReport> layers;
    WeightErrorReport weight_errors;  // pooled over the whole network
    double analytic_fraction_below_02 = 0.0;
};

// the Fig. 8/9 style per-layer study on one input image
SingleImageAnalysis analyze_single_image(const net::Architecture& model,
                                         const cim::ArrayConfig& array_cfg,
                                         const Eigen::VectorXd& image, int cycles,
                                         uint64_t seed);

// index of the first test image with the given label
int find_image_with_label(const data::Dataset& ds, int label);

// subcommand in {train, eval-ideal, eval-hardware, sweep-variation,
// sweep-cycles, device-curve, report}; returns the process exit code
int run_experiment(const ExperimentConfig& config, const std::string& subcommand,
                   bool check);

}  // namespace pbnn::exp

#endif
