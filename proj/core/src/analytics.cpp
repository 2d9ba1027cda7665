#include "pbnn/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pbnn::exp {

WeightErrorReport weight_error_histogram(const Eigen::VectorXd& p_true,
                                         const Eigen::VectorXd& p_hat, int bins) {
    if (p_true.size() != p_hat.size()) {
        throw std::invalid_argument("weight_error_histogram: size mismatch");
    }
    if (bins < 1) throw std::invalid_argument("weight_error_histogram: need bins >= 1");
    WeightErrorReport rep;
    rep.count = p_true.size();
    rep.hist.edges.resize(bins + 1);
    rep.hist.counts.assign(bins, 0);
    for (int b = 0; b <= bins; ++b) {
        rep.hist.edges[b] = -1.0 + 2.0 * b / bins;  // errors live in [-1, 1]
    }
    long long below = 0;
    double sq = 0.0;
    for (Eigen::Index i = 0; i < p_true.size(); ++i) {
        const double err = p_hat[i] - p_true[i];
        sq += err * err;
        if (std::abs(err) < 0.2) ++below;
        int b = static_cast<int>((err + 1.0) / 2.0 * bins);
        b = std::clamp(b, 0, bins - 1);
        ++rep.hist.counts[b];
    }
    rep.hist.total = rep.count;
    rep.fraction_below_02 = static_cast<double>(below) / static_cast<double>(rep.count);
    rep.mse = sq / static_cast<double>(rep.count);
    return rep;
}

Eigen::VectorXd flatten_weights(const net::Architecture& arch) {
    Eigen::Index total = 0;
    for (const auto& l : arch.layers) {
        if (l.has_weights()) total += l.p.p.size();
    }
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& l : arch.layers) {
        if (!l.has_weights()) continue;
        out.segment(at, l.p.p.size()) =
            Eigen::Map<const Eigen::VectorXd>(l.p.p.data(), l.p.p.size());
        at += l.p.p.size();
    }
    return out;
}

double analytic_mean_weight_std(const Eigen::VectorXd& probs, int cycles) {
    if (cycles < 1) throw std::invalid_argument("analytic_mean_weight_std: cycles >= 1");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        sum += std::sqrt(probs[i] * (1.0 - probs[i]) / cycles);
    }
    return sum / static_cast<double>(probs.size());
}

double analytic_fraction_within(const Eigen::VectorXd& probs, int cycles, double threshold) {
    // exact binomial tail sum per weight
    std::vector<double> log_fact(cycles + 1, 0.0);
    for (int i = 2; i <= cycles; ++i) log_fact[i] = log_fact[i - 1] + std::log(i);
    double sum = 0.0;
    for (Eigen::Index w = 0; w < probs.size(); ++w) {
        const double p = probs[w];
        double mass = 0.0;
        for (int k = 0; k <= cycles; ++k) {
            if (std::abs(static_cast<double>(k) / cycles - p) >= threshold) continue;
            if ((p == 0.0 && k > 0) || (p == 1.0 && k < cycles)) continue;
            double logpk = log_fact[cycles] - log_fact[k] - log_fact[cycles - k];
            if (k > 0) logpk += k * std::log(p);
            if (cycles - k > 0) logpk += (cycles - k) * std::log(1.0 - p);
            mass += std::exp(logpk);
        }
        sum += mass;
    }
    return sum / static_cast<double>(probs.size());
}

double simulate_mean_weight_std(const Eigen::VectorXd& probs, int cycles, int reps,
                                uint64_t seed) {
    if (reps < 2) throw std::invalid_argument("simulate_mean_weight_std: reps >= 2");
    const Eigen::Index n = probs.size();
    const int n_chunks = 64;
    std::vector<double> partial(n_chunks, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n_chunks; ++c) {
        const Eigen::Index lo = c * n / n_chunks;
        const Eigen::Index hi = (c + 1) * n / n_chunks;
        Rng rng(derive_seed(seed, 0x77737464, static_cast<uint64_t>(c)));
        double acc = 0.0;
        for (Eigen::Index w = lo; w < hi; ++w) {
            const double p = probs[w];
            if (p <= 0.0 || p >= 1.0) continue;  // saturated weights never vary
            double sum = 0.0, sumsq = 0.0;
            for (int r = 0; r < reps; ++r) {
                int k = 0;
                for (int s = 0; s < cycles; ++s) k += rng.bernoulli(p) ? 1 : 0;
                const double ph = static_cast<double>(k) / cycles;
                sum += ph;
                sumsq += ph * ph;
            }
            const double mean = sum / reps;
            const double var = std::max(0.0, (sumsq - reps * mean * mean) / (reps - 1));
            acc += std::sqrt(var);
        }
        partial[c] = acc;
    }
    double total = 0.0;
    for (double v : partial) total += v;
    return total / static_cast<double>(n);
}

std::vector<LayerReport> layer_mse_report(const net::Architecture& arch,
                                          const net::ExpectationResult& ideal,
                                          const net::LayerCapture& hardware) {
    const auto names = arch.weighted_layer_names();
    const auto weighted = arch.weighted_layers();
    if (ideal.layer_bits.size() != names.size() || hardware.layer_bits.size() != names.size() ||
        hardware.weight_p_hat.size() != names.size()) {
        throw std::invalid_argument("layer_mse_report: layer count mismatch");
    }
    std::vector<LayerReport> reports;
    for (size_t i = 0; i < names.size(); ++i) {
        LayerReport rep;
        rep.name = names[i];
        const auto& l = arch.layers[weighted[i]];
        const Eigen::Map<const Eigen::VectorXd> p_true(l.p.p.data(), l.p.p.size());
        const auto& p_hat = hardware.weight_p_hat[i];
        if (p_hat.size() != p_true.size()) {
            throw std::invalid_argument("layer_mse_report: weight count mismatch at " + rep.name);
        }
        rep.weight_mse = (p_hat - p_true).squaredNorm() / static_cast<double>(p_true.size());
        const auto& ib = ideal.layer_bits[i];
        const auto& hb = hardware.layer_bits[i];
        if (ib.size() != hb.size()) {
            throw std::invalid_argument("layer_mse_report: output size mismatch at " + rep.name);
        }
        int diff = 0;
        for (Eigen::Index k = 0; k < ib.size(); ++k) diff += ib[k] != hb[k] ? 1 : 0;
        rep.output_error_rate = static_cast<double>(diff) / static_cast<double>(ib.size());
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::vector<CurvePoint> device_curve(const device::SwitchingCurve& curve,
                                     const std::vector<double>& grid, int trials,
                                     uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("device_curve: trials >= 1");
    std::vector<CurvePoint> points;
    points.reserve(grid.size());
    for (size_t g = 0; g < grid.size(); ++g) {
        CurvePoint pt;
        pt.v_wr = grid[g];
        pt.trials = trials;
        pt.p_analytic = device::switching_probability(curve, grid[g]);
        Rng rng(derive_seed(seed, 0x63757276, g));
        int flips = 0;
        for (int t = 0; t < trials; ++t) {
            if (device::attempt_switch(device::MtjState::AP, grid[g], curve, rng) ==
                device::MtjState::P) {
                ++flips;
            }
        }
        pt.p_empirical = static_cast<double>(flips) / trials;
        const double se = std::sqrt(std::max(pt.p_empirical * (1.0 - pt.p_empirical), 1e-12) /
                                    trials);
        pt.ci_low = std::max(0.0, pt.p_empirical - 1.96 * se);
        pt.ci_high = std::min(1.0, pt.p_empirical + 1.96 * se);
        points.push_back(pt);
    }
    return points;
}

}  // namespace pbnn::exp
