#ifndef PBNN_DEVICE_HPP
#define PBNN_DEVICE_HPP

#include <utility>
#include <vector>

#include "pbnn/rng.hpp"

namespace pbnn::device {

// Table-I compact-model constants. Units follow the table: lengths in nm,
// RA in Ohm*m^2, rho in Ohm*m.
struct DeviceParams {
    double ra = 1.51e-9;          // resistance-area product
    double t_sl_nm = 2.5;         // free-layer thickness
    double t_ox_nm = 1.7;         // MgO barrier thickness
    double v_h = 0.75;            // bias where TMR halves
    double tmr0 = 1.56;           // zero-bias TMR ratio
    double a_nm = 600.0;          // pillar length
    double b_nm = 300.0;          // pillar width
    double d_nm = 6.0;            // heavy-metal strip thickness
    double rho = 195e-8;          // heavy-metal resistivity
    double pulse_width_ms = 40.0; // write pulse duration
    bool rectangular_pillar = false;
    double hm_length_nm = -1.0;   // current-path length; <0 means "use a"
    double breakdown_guard_v = 1.5;

    void validate() const;  // throws std::invalid_argument
};

enum class MtjState { P, AP };

// Logistic switching-probability curve, pinned by calibration anchors.
struct SwitchingCurve {
    double v0 = 0.0;   // sigmoid midpoint, V
    double k = 1.0;    // steepness, 1/V
    std::vector<std::pair<double, double>> anchors;  // (v_wr, probability)
    double p_min = 0.001;
    double p_max = 0.999;

    // closed-form fit through two (voltage, probability) points
    static SwitchingCurve from_anchors(std::pair<double, double> a1,
                                       std::pair<double, double> a2);
    // measured anchors: (0.5 V, 0.216) plus a configurable (0.65 V, 0.95)
    static SwitchingCurve calibrated();

    void validate() const;
};

// pillar area in m^2 (elliptical by default)
double mtj_area(const DeviceParams& params);

double tmr(const DeviceParams& params, double v_bias);

// R_P is bias-independent; R_AP(V) = R_P * (1 + TMR(V))
double resistance(const DeviceParams& params, MtjState state, double v_bias);
double conductance(const DeviceParams& params, MtjState state, double v_bias);

double switching_probability(const SwitchingCurve& curve, double v_wr);

// exact sigmoid inverse; p outside [p_min, p_max] clips to the window edge
double voltage_for_probability(const SwitchingCurve& curve, double p);

// AP -> P with probability P_sw(v_wr); a device already in P stays put
MtjState attempt_switch(MtjState state, double v_wr, const SwitchingCurve& curve, Rng& rng);

double hm_strip_resistance(const DeviceParams& params);

}  // namespace pbnn::device

#endif
