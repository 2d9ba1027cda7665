#include "pbnn/device.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pbnn::device {

namespace {
constexpr double kNm = 1e-9;

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

void DeviceParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) {
            throw std::invalid_argument(std::string("device parameter ") + name +
                                        " must be positive");
        }
    };
    positive(ra, "ra");
    positive(t_sl_nm, "t_sl");
    positive(t_ox_nm, "t_ox");
    positive(v_h, "v_h");
    positive(tmr0, "tmr0");
    positive(a_nm, "a");
    positive(b_nm, "b");
    positive(d_nm, "d");
    positive(rho, "rho");
    positive(pulse_width_ms, "pulse_width_ms");
    positive(breakdown_guard_v, "breakdown_guard_v");
}

SwitchingCurve SwitchingCurve::from_anchors(std::pair<double, double> a1,
                                            std::pair<double, double> a2) {
    const auto [v1, p1] = a1;
    const auto [v2, p2] = a2;
    if (v1 == v2) throw std::invalid_argument("switching curve anchors share a voltage");
    SwitchingCurve c;
    // logit(p) = k (v - v0) at both anchors
    c.k = (logit(p2) - logit(p1)) / (v2 - v1);
    if (!(c.k > 0.0)) {
        throw std::invalid_argument("switching curve anchors are not increasing");
    }
    c.v0 = v1 - logit(p1) / c.k;
    c.anchors = {a1, a2};
    return c;
}

SwitchingCurve SwitchingCurve::calibrated() {
    return from_anchors({0.5, 0.216}, {0.65, 0.95});
}

void SwitchingCurve::validate() const {
    if (!(k > 0.0)) throw std::invalid_argument("switching curve: k must be positive");
    for (const auto& [v, p] : anchors) {
        if (std::abs(switching_probability(*this, v) - p) > 1e-6) {
            throw std::invalid_argument("switching curve misses anchor at " +
                                        std::to_string(v) + " V");
        }
    }
}

double mtj_area(const DeviceParams& params) {
    const double a = params.a_nm * kNm;
    const double b = params.b_nm * kNm;
    if (params.rectangular_pillar) return a * b;
    return std::numbers::pi * a * b / 4.0;
}

double tmr(const DeviceParams& params, double v_bias) {
    const double r = v_bias / params.v_h;
    return params.tmr0 / (1.0 + r * r);
}

double resistance(const DeviceParams& params, MtjState state, double v_bias) {
    if (std::abs(v_bias) >= params.breakdown_guard_v) {
        throw std::out_of_range("MTJ bias " + std::to_string(v_bias) +
                                " V exceeds the breakdown guard");
    }
    const double r_p = params.ra / mtj_area(params);
    if (state == MtjState::P) return r_p;
    return r_p * (1.0 + tmr(params, v_bias));
}

double conductance(const DeviceParams& params, MtjState state, double v_bias) {
    return 1.0 / resistance(params, state, v_bias);
}

double switching_probability(const SwitchingCurve& curve, double v_wr) {
    if (v_wr < 0.0) throw std::domain_error("write voltage must be non-negative");
    return logistic(curve.k * (v_wr - curve.v0));
}

double voltage_for_probability(const SwitchingCurve& curve, double p) {
    if (std::isnan(p) || p < 0.0 || p > 1.0) {
        throw std::domain_error("switching probability must lie in [0,1]");
    }
    const double clipped = std::clamp(p, curve.p_min, curve.p_max);
    return curve.v0 + logit(clipped) / curve.k;
}

MtjState attempt_switch(MtjState state, double v_wr, const SwitchingCurve& curve, Rng& rng) {
    if (state == MtjState::P) return MtjState::P;
    return rng.bernoulli(switching_probability(curve, v_wr)) ? MtjState::P : MtjState::AP;
}

double hm_strip_resistance(const DeviceParams& params) {
    const double length = (params.hm_length_nm < 0.0 ? params.a_nm : params.hm_length_nm) * kNm;
    const double width = params.b_nm * kNm;
    const double thickness = params.d_nm * kNm;
    return params.rho * length / (width * thickness);
}

}  // namespace pbnn::device
