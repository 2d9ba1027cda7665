#ifndef PBNN_CONFIG_HPP
#define PBNN_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbnn/cim_array.hpp"
#include "pbnn/network.hpp"
#include "pbnn/trainer.hpp"

namespace pbnn::exp {

struct EvalConfig {
    int cycles = 10;
    int subset = 2000;            // -1 runs the full split
    net::HardwareMode mode = net::HardwareMode::PerCycleBits;
    std::string checkpoint;       // relative to the output dir unless absolute
    bool resample_per_patch = false;
};

struct SweepConfig {
    std::vector<double> variation_grid{0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5};
    std::vector<int> cycle_grid{1, 2, 5, 10, 20, 50};
    int variation_trials = 5;
    int variation_subset = 2000;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    bool seed_set = false;  // a seed must come from the file or the CLI
    std::string dataset_dir = "data/mnist";
    std::string output_dir = "out";
    cim::ArrayConfig array;  // carries the device block and the noise knobs
    net::Architecture arch = net::Architecture::canonical();
    train::TrainConfig train;
    EvalConfig eval;
    SweepConfig sweeps;
    std::vector<std::string> train_models{"pbnn", "bnn"};

    void validate() const;
};

// Parses the JSON config file. Unknown keys raise an error naming the key so
// typos do not silently fall back to defaults.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// canonical serialization (sorted keys) used for hashing and the manifest
std::string canonical_config(const ExperimentConfig& config);
uint64_t config_hash(const ExperimentConfig& config);
std::string config_hash_hex(const ExperimentConfig& config);

}  // namespace pbnn::exp

#endif
