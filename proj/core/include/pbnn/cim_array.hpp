#ifndef PBNN_CIM_ARRAY_HPP
#define PBNN_CIM_ARRAY_HPP

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "pbnn/device.hpp"
#include "pbnn/prob.hpp"
#include "pbnn/rng.hpp"

namespace pbnn::cim {

// Relative/additive noise knobs, all zero unless an experiment sets them.
struct NoiseConfig {
    double sigma_conductance = 0.0;  // device-to-device, frozen per cell
    double sigma_read = 0.0;         // cycle-to-cycle, fresh per access
    double sigma_comparator = 0.0;   // comparator input offset, V
};

struct ArrayConfig {
    int rows = 32;  // m, output channels
    int cols = 9;   // n, inputs per row
    double v_rd_max = 0.1;        // read voltage full scale, V
    double transimpedance = 30.0; // R_T, V per A
    double v_offset = 0.7478;     // loader output at zero current, V
    NoiseConfig noise;
    device::DeviceParams device;
    device::SwitchingCurve curve = device::SwitchingCurve::calibrated();

    void validate() const;
};

enum class Phase { Idle, Reset, WriteWeight, AccumulateCompare };

struct PvmmReadout {
    Eigen::VectorXd i_rwl;  // per-row summed current, A
    Eigen::VectorXd v_rwl;  // per-row loader output, V
    double v_rwld = 0.0;    // reference-row loader output, V
    Eigen::VectorXi bits;   // comparator outputs
};

// Functional model of the m x n SOT-MRAM weight array with its reference row
// and transform loaders, sequenced as Reset / Write-Weight / Accumulate-&-
// Compare. One instance is a single logical state machine; independent
// replicas (sharing the frozen device-to-device draw via variation_seed) can
// run in parallel.
class CimArray {
public:
    explicit CimArray(ArrayConfig config, uint64_t variation_seed = 0);

    const ArrayConfig& config() const { return config_; }
    Phase phase() const { return phase_; }

    void reset_all();

    // applies one write pulse per cell of row j; a second write to the same
    // row before the next reset is a protocol error
    void write_row(int row, std::span<const double> v_wr, Rng& rng);

    // One fresh Bernoulli realization: p(i,j) is the probability that cell
    // (row=j, col=i) ends up P. Endpoint probabilities map to no-pulse /
    // saturating-pulse writes so that p in {0,1} is exact, matching the
    // distribution of prob::sample_weights.
    void program_weights(const prob::ProbWeightMatrix& p, Rng& rng);

    // x holds per-column read levels in [0,1] (v_rd_i = x_i * v_rd_max)
    PvmmReadout accumulate(std::span<const double> x, Rng& rng);

    // bipolar +-1 inputs via the shifted {0,1} encoding with a per-row
    // reference correction; zero-noise bits equal the sign of sum b_ij x_i
    PvmmReadout accumulate_bipolar(std::span<const double> x_bipolar, Rng& rng);

    // reset -> program -> accumulate
    PvmmReadout run_sampling_cycle(const prob::ProbWeightMatrix& p,
                                   std::span<const double> x, Rng& rng);

    device::MtjState cell_state(int row, int col) const;
    void set_cell_state(int row, int col, device::MtjState s);  // test injection

    // 1 where the cell is P (bipolar +1), 0 where AP
    Eigen::MatrixXi state_matrix() const;

private:
    double cell_conductance(int row, int col, double v_bias, Rng& rng, bool with_read_noise) const;
    PvmmReadout accumulate_with_reference_shift(std::span<const double> x,
                                                const Eigen::VectorXd& reference_shift,
                                                Rng& rng);

    ArrayConfig config_;
    std::vector<device::MtjState> cells_;      // row-major [row*cols + col]
    Eigen::MatrixXd cell_delta_;               // frozen conductance perturbation
    Eigen::VectorXd ref_delta_p_, ref_delta_ap_;
    Phase phase_ = Phase::Idle;
    std::vector<uint8_t> row_written_;
    int rows_written_ = 0;
};

}  // namespace pbnn::cim

#endif
