#include "battbee/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace battbee {

double ocv_eval(const OcvPolynomial& p, double v_s) {
    if (v_s < -1e-9 || v_s > 1.0 + 1e-9)
        throw std::domain_error("ocv_eval: V_s outside [0,1]");
    return p(v_s);
}

double soc(const BattBeeParams& p, const SimState& s) {
    return (p.C_b * s.V_b + p.C_s * s.V_s) / (p.C_b + p.C_s) * 100.0;
}

std::pair<double, double> electrical_derivatives(const BattBeeParams& p,
                                                 const FaultInputs& f,
                                                 const SimState& s, double I) {
    const double dVb = (s.V_s - s.V_b) / (p.R_b * p.C_b);
    const double dVs = (s.V_b - s.V_s) / (p.R_b * p.C_s) - f.g_isc1 * s.V_s / p.C_s + I / p.C_s;
    return {dVb, dVs};
}

double terminal_voltage(const BattBeeParams& p, const FaultInputs& f,
                        const SimState& s, double I) {
    return (ocv_eval(p.ocv, s.V_s) + I * p.R_o) / (1.0 + p.R_o * f.g_isc2);
}

double q_ohm(const BattBeeParams& p, double I) { return I * I * p.R_o; }

double q_ec(const BattBeeParams& p, const FaultInputs& f, const SimState& s,
            double I, bool attribute_external_current) {
    if (f.g_isc1 == 0.0) return 0.0;
    // -h_ec * d(SoC)/dt restricted to the ISC drain path. The mixed form adds
    // the printed external-current contribution -I/(C_b+C_s).
    double q = p.h_ec * f.g_isc1 * s.V_s / (p.C_b + p.C_s);
    if (attribute_external_current) q -= p.h_ec * I / (p.C_b + p.C_s);
    return q;
}

double q_decomp(const BattBeeParams& p, const SimState& s) {
    if (s.decomp_depleted) return 0.0;
    if (p.alpha[0] == 0.0) return 0.0;
    const double dT = s.T_core - p.T_onset;
    // log-space evaluation: log q = log(a1) + a2 dT - log(1 + a3 exp(a4 dT))
    const double log_a1 = std::log(p.alpha[0]);
    double log_den;
    const double e4 = p.alpha[3] * dT;
    if (e4 > 700.0) {
        log_den = std::log(p.alpha[2]) + e4; // 1 negligible vs a3 exp(e4)
    } else {
        log_den = std::log1p(p.alpha[2] * std::exp(e4));
    }
    const double log_q = log_a1 + p.alpha[1] * dT - log_den;
    if (log_q > std::log(p.q_decomp_max)) return p.q_decomp_max;
    return std::exp(log_q);
}

double r_surf(const BattBeeParams& p, double T_surf, double T_amb) {
    const double r = p.R_surf0 * (1.0 - p.beta * (T_surf - T_amb));
    const double floor = p.r_surf_min();
    return r < floor ? floor : r;
}

HeatRates heat_rates(const BattBeeParams& p, const FaultInputs& f,
                     const SimState& s, double I) {
    HeatRates h;
    h.q_ohm = q_ohm(p, I);
    h.q_ec = q_ec(p, f, s, I);
    h.q_decomp = q_decomp(p, s);
    h.q_exo = h.q_ec + h.q_decomp;
    h.q_total = h.q_ohm + h.q_exo;
    return h;
}

std::pair<double, double> thermal_derivatives(const BattBeeParams& p,
                                              const SimState& s,
                                              double q_total, double T_amb) {
    const double rs = r_surf(p, s.T_surf, T_amb);
    const double dTc = (s.T_surf - s.T_core) / (p.R_core * p.C_core) + q_total / p.C_core;
    const double dTs = (s.T_core - s.T_surf) / (p.R_core * p.C_surf) -
                       (s.T_surf - T_amb) / (rs * p.C_surf);
    return {dTc, dTs};
}

} // namespace battbee
