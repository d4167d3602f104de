#pragma once

#include "battbee/params.hpp"

#include <array>

namespace battbee::spm {

// Reduced single-particle model with a separator ISC path: two finite-volume
// elements per electrode. Serves as an independent physics oracle for the
// equivalent-circuit electrical sub-circuit.

inline constexpr double kFaraday = 96485.33212;   // C/mol
inline constexpr double kGasConstant = 8.314462618; // J/(mol K)

struct ElectrodeParams {
    double D_s = 1e-14;   // m^2/s
    double r_s = 5e-6;    // m, particle radius
    double r_b = 0.0;     // m, inner-element radius; 0 means r_s*(1/2)^(1/3)
    double a = 3e5;       // 1/m, volume-specific interfacial area
    double L = 70e-6;     // m, electrode thickness
    double i0 = 20.0;     // A/m^2, exchange current density
    double R_f = 0.0;     // ohm m^2, film resistance
    double R_e = 0.0;     // ohm, electrolyte resistance
    double c_max = 30000.0; // mol/m^3
    std::vector<double> ocp{3.5}; // open-circuit potential polynomial in theta

    double inner_radius() const;
    double S_b() const; // inner-element interface area
    double S_s() const; // particle surface area
    double dv_b() const;
    double dv_s() const;
};

struct SpmParams {
    ElectrodeParams pos;
    ElectrodeParams neg;
    double S = 0.1;        // m^2, cell cross-sectional area
    double alpha_ct = 0.5; // charge-transport coefficient
    double T = 298.15;     // K
    double g_sep = 0.0;    // 1/ohm, separator ISC conductance

    // Stoichiometry windows mapping normalized charge [0,1] to theta.
    double theta_neg_lo = 0.05, theta_neg_hi = 0.85;
    double theta_pos_lo = 0.30, theta_pos_hi = 0.95; // pos delithiates on charge

    void validate() const;
};

struct SpmState {
    double cbar_b_pos = 0.0, cbar_s_pos = 0.0; // mol/m^3
    double cbar_b_neg = 0.0, cbar_s_neg = 0.0;
};

/// State at normalized charge level v in [0,1], all elements equilibrated.
SpmState equilibrium_state(const SpmParams& p, double v);

/// ISC current through the separator; zero when g_sep = 0.
double spm_isc_current(const SpmParams& p, const SpmState& s, double I);

/// d(cbar)/dt for all four elements, order (b+, s+, b-, s-).
std::array<double, 4> cbar_derivatives(const SpmParams& p, const SpmState& s, double I);

/// Butler-Volmer overpotential for one electrode; sign = +1 for positive.
double overpotential(const SpmParams& p, const ElectrodeParams& e, double sign,
                     double I_net);

double spm_terminal_voltage(const SpmParams& p, const SpmState& s, double I);

/// Total lithium inventory in mol (both electrodes), for conservation checks.
double total_lithium(const SpmParams& p, const SpmState& s);

/// RK4 step over the four concentration states, I held constant.
SpmState spm_step(const SpmParams& p, const SpmState& s, double I, double dt);

/// Electrical-parameter reduction to the equivalent-circuit form. Thermal and
/// fault fields of the result keep their defaults; the OCV polynomial is a
/// least-squares fit of U+(theta+) - U-(theta-) over the charge window.
BattBeeParams reduce_to_battbee(const SpmParams& p, int ocv_order = 8);

} // namespace battbee::spm
