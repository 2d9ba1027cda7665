#include "pbnn/cim_array.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pbnn::cim {

using device::MtjState;

void ArrayConfig::validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("array: rows and cols must be >= 1");
    if (!(v_rd_max > 0.0)) throw std::invalid_argument("array: v_rd_max must be positive");
    if (v_rd_max >= device.breakdown_guard_v) {
        throw std::invalid_argument("array: v_rd_max exceeds the device breakdown guard");
    }
    if (noise.sigma_conductance < 0.0 || noise.sigma_read < 0.0 || noise.sigma_comparator < 0.0) {
        throw std::invalid_argument("array: noise stds must be non-negative");
    }
    device.validate();
    curve.validate();
}

CimArray::CimArray(ArrayConfig config, uint64_t variation_seed)
    : config_(std::move(config)) {
    config_.validate();
    const int m = config_.rows;
    const int n = config_.cols;
    cells_.assign(static_cast<size_t>(m) * n, MtjState::AP);
    row_written_.assign(m, 0);

    cell_delta_ = Eigen::MatrixXd::Zero(m, n);
    ref_delta_p_ = Eigen::VectorXd::Zero(n);
    ref_delta_ap_ = Eigen::VectorXd::Zero(n);
    if (config_.noise.sigma_conductance > 0.0) {
        Rng rng(derive_seed(variation_seed, 0x636f6e64));
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < n; ++c) {
                cell_delta_(r, c) = config_.noise.sigma_conductance * rng.normal();
            }
        }
        for (int c = 0; c < n; ++c) ref_delta_p_[c] = config_.noise.sigma_conductance * rng.normal();
        for (int c = 0; c < n; ++c) ref_delta_ap_[c] = config_.noise.sigma_conductance * rng.normal();
    }
}

void CimArray::reset_all() {
    std::fill(cells_.begin(), cells_.end(), MtjState::AP);
    std::fill(row_written_.begin(), row_written_.end(), uint8_t{0});
    rows_written_ = 0;
    phase_ = Phase::Reset;
}

void CimArray::write_row(int row, std::span<const double> v_wr, Rng& rng) {
    if (row < 0 || row >= config_.rows) {
        throw std::out_of_range("write_row: row " + std::to_string(row) + " out of range");
    }
    if (phase_ != Phase::Reset && phase_ != Phase::WriteWeight) {
        throw std::logic_error("write_row: array must be reset before writing");
    }
    if (static_cast<int>(v_wr.size()) != config_.cols) {
        throw std::invalid_argument("write_row: expected " + std::to_string(config_.cols) +
                                    " write voltages");
    }
    if (row_written_[row]) {
        throw std::logic_error("write_row: row " + std::to_string(row) +
                               " already written this cycle");
    }
    for (int c = 0; c < config_.cols; ++c) {
        auto& s = cells_[static_cast<size_t>(row) * config_.cols + c];
        s = device::attempt_switch(s, v_wr[c], config_.curve, rng);
    }
    row_written_[row] = 1;
    ++rows_written_;
    phase_ = Phase::WriteWeight;
}

void CimArray::program_weights(const prob::ProbWeightMatrix& p, Rng& rng) {
    if (phase_ != Phase::Reset) {
        throw std::logic_error("program_weights: array must be reset first");
    }
    if (p.rows() != config_.cols || p.cols() != config_.rows) {
        throw std::invalid_argument("program_weights: expected a " +
                                    std::to_string(config_.cols) + "x" +
                                    std::to_string(config_.rows) + " probability matrix");
    }
    const auto& curve = config_.curve;
    for (int r = 0; r < config_.rows; ++r) {
        for (int c = 0; c < config_.cols; ++c) {
            const double prob = p.p(c, r);
            if (prob < 0.0 || prob > 1.0 || std::isnan(prob)) {
                throw std::invalid_argument("program_weights: probability out of [0,1]");
            }
            auto& s = cells_[static_cast<size_t>(r) * config_.cols + c];
            if (prob <= curve.p_min) {
                continue;  // no pulse, cell stays AP
            }
            if (prob >= curve.p_max) {
                s = MtjState::P;  // saturating pulse
                continue;
            }
            s = device::attempt_switch(s, device::voltage_for_probability(curve, prob),
                                       curve, rng);
        }
        row_written_[r] = 1;
    }
    rows_written_ = config_.rows;
    phase_ = Phase::WriteWeight;
}

double CimArray::cell_conductance(int row, int col, double v_bias, Rng& rng,
                                  bool with_read_noise) const {
    const MtjState s = cells_[static_cast<size_t>(row) * config_.cols + col];
    double g = device::conductance(config_.device, s, v_bias) * (1.0 + cell_delta_(row, col));
    if (with_read_noise) g *= 1.0 + config_.noise.sigma_read * rng.normal();
    return g;
}

PvmmReadout CimArray::accumulate(std::span<const double> x, Rng& rng) {
    return accumulate_with_reference_shift(x, Eigen::VectorXd::Zero(config_.rows), rng);
}

PvmmReadout CimArray::accumulate_with_reference_shift(std::span<const double> x,
                                                      const Eigen::VectorXd& reference_shift,
                                                      Rng& rng) {
    if (phase_ != Phase::WriteWeight && phase_ != Phase::AccumulateCompare) {
        throw std::logic_error("accumulate: weights have not been programmed");
    }
    const int m = config_.rows;
    const int n = config_.cols;
    if (static_cast<int>(x.size()) != n) {
        throw std::invalid_argument("accumulate: expected " + std::to_string(n) +
                                    " input levels");
    }
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("accumulate: read levels must lie in [0,1]");
        }
    }
    phase_ = Phase::AccumulateCompare;

    const bool read_noise = config_.noise.sigma_read > 0.0;
    const bool cmp_noise = config_.noise.sigma_comparator > 0.0;

    // base conductances per column at the column's read bias
    Eigen::VectorXd v_rd(n), g_p(n), g_ap(n);
    for (int c = 0; c < n; ++c) {
        v_rd[c] = x[c] * config_.v_rd_max;
        g_p[c] = device::conductance(config_.device, MtjState::P, v_rd[c]);
        g_ap[c] = device::conductance(config_.device, MtjState::AP, v_rd[c]);
    }

    // reference row: a P/AP pair per column, averaged
    double i_ref = 0.0;
    for (int c = 0; c < n; ++c) {
        double gp = g_p[c] * (1.0 + ref_delta_p_[c]);
        double gap = g_ap[c] * (1.0 + ref_delta_ap_[c]);
        if (read_noise) {
            gp *= 1.0 + config_.noise.sigma_read * rng.normal();
            gap *= 1.0 + config_.noise.sigma_read * rng.normal();
        }
        i_ref += 0.5 * (gp + gap) * v_rd[c];
    }

    PvmmReadout out;
    out.i_rwl.resize(m);
    out.v_rwl.resize(m);
    out.bits.resize(m);
    for (int r = 0; r < m; ++r) {
        double i = 0.0;
        for (int c = 0; c < n; ++c) {
            const MtjState s = cells_[static_cast<size_t>(r) * n + c];
            double g = (s == MtjState::P ? g_p[c] : g_ap[c]) * (1.0 + cell_delta_(r, c));
            if (read_noise) g *= 1.0 + config_.noise.sigma_read * rng.normal();
            i += g * v_rd[c];
        }
        out.i_rwl[r] = i;
        out.v_rwl[r] = config_.v_offset + config_.transimpedance * i;
    }
    out.v_rwld = config_.v_offset + config_.transimpedance * i_ref;
    for (int r = 0; r < m; ++r) {
        double threshold = out.v_rwld + reference_shift[r];
        if (cmp_noise) threshold += config_.noise.sigma_comparator * rng.normal();
        out.bits[r] = out.v_rwl[r] > threshold ? 1 : 0;
    }
    return out;
}

PvmmReadout CimArray::accumulate_bipolar(std::span<const double> x_bipolar, Rng& rng) {
    const int n = config_.cols;
    if (static_cast<int>(x_bipolar.size()) != n) {
        throw std::invalid_argument("accumulate_bipolar: expected " + std::to_string(n) +
                                    " inputs");
    }
    std::vector<double> shifted(n), ones(n, 1.0);
    for (int c = 0; c < n; ++c) {
        const double v = x_bipolar[c];
        if (v != 1.0 && v != -1.0) {
            throw std::invalid_argument("accumulate_bipolar: inputs must be +-1");
        }
        shifted[c] = (v + 1.0) * 0.5;
    }
    // sum b x = 2 sum b u - sum b with u = (x+1)/2: the all-ones readout
    // supplies the per-row sum-of-weights correction once per cycle
    const PvmmReadout all_on = accumulate_with_reference_shift(ones, Eigen::VectorXd::Zero(config_.rows), rng);
    Eigen::VectorXd shift = 0.5 * (all_on.v_rwl.array() - all_on.v_rwld).matrix();
    return accumulate_with_reference_shift(shifted, shift, rng);
}

PvmmReadout CimArray::run_sampling_cycle(const prob::ProbWeightMatrix& p,
                                         std::span<const double> x, Rng& rng) {
    reset_all();
    program_weights(p, rng);
    return accumulate(x, rng);
}

MtjState CimArray::cell_state(int row, int col) const {
    if (row < 0 || row >= config_.rows || col < 0 || col >= config_.cols) {
        throw std::out_of_range("cell_state: index out of range");
    }
    return cells_[static_cast<size_t>(row) * config_.cols + col];
}

void CimArray::set_cell_state(int row, int col, MtjState s) {
    if (row < 0 || row >= config_.rows || col < 0 || col >= config_.cols) {
        throw std::out_of_range("set_cell_state: index out of range");
    }
    cells_[static_cast<size_t>(row) * config_.cols + col] = s;
    if (phase_ == Phase::Idle || phase_ == Phase::Reset) phase_ = Phase::WriteWeight;
}

Eigen::MatrixXi CimArray::state_matrix() const {
    Eigen::MatrixXi m(config_.rows, config_.cols);
    for (int r = 0; r < config_.rows; ++r) {
        for (int c = 0; c < config_.cols; ++c) {
            m(r, c) = cells_[static_cast<size_t>(r) * config_.cols + c] == MtjState::P ? 1 : 0;
        }
    }
    return m;
}

}  // namespace pbnn::cim
