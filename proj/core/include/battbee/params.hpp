#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace battbee {

/// Open-circuit voltage as a polynomial of the normalized shell voltage V_s.
/// Monotonicity on [0,1] is enforced at construction because the detection
/// thresholds need strictly positive slope bounds.
class OcvPolynomial {
  public:
    OcvPolynomial() = default;
    explicit OcvPolynomial(std::vector<double> lambda);

    double operator()(double v_s) const;
    double slope(double v_s) const;

    const std::vector<double>& coefficients() const { return lambda_; }
    std::size_t order() const { return lambda_.empty() ? 0 : lambda_.size() - 1; }

    /// Monotone nondecreasing check on a dense grid; also used by identify.
    static bool is_monotone(const std::vector<double>& lambda, int grid = 2001);

  private:
    std::vector<double> lambda_{3.0, 1.0};
};

struct BattBeeParams {
    // Electrical sub-circuit
    double C_b = 76900.887;   // F
    double C_s = 8115.772;    // F
    double R_b = 1.236e-3;    // ohm
    double R_o = 4.322e-3;    // ohm

    // Thermal sub-circuit
    double C_core = 162.760;  // J/K
    double C_surf = 168.129;  // J/K
    double R_core = 0.020;    // K/W
    double R_surf0 = 3.865;   // K/W at zero surface-ambient gradient
    double beta = 1.0 / 600.0; // 1/K

    // Exothermic heat terms
    double h_ec = 0.0;                           // J per unit SoC fraction
    std::array<double, 4> alpha{0.0, 0.1, 1.0, 0.05}; // decomposition coefficients
    double T_onset = 400.0;  // K
    double T_peak = 800.0;   // K, depletion latch cutoff

    // Numerical guards
    double r_surf_min_frac = 0.05; // floor for R_surf as fraction of R_surf0
    double q_decomp_max = 1e6;     // W, saturation for the decomposition term

    OcvPolynomial ocv;

    double capacity() const { return C_b + C_s; } // coulombs, normalized nodes
    double r_surf_min() const { return r_surf_min_frac * R_surf0; }

    /// Throws std::invalid_argument on violated invariants. The decomposition
    /// coefficients are checked numerically over [T_amb_ref, T_peak].
    void validate(double T_amb_ref = 298.15) const;
};

/// ISC fault inputs in conductance form, so "no fault" is exactly zero.
struct FaultInputs {
    double g_isc1 = 0.0; // 1/ohm, internal drain path
    double g_isc2 = 0.0; // 1/ohm, terminal collapse path
};

struct SimState {
    double V_b = 1.0;    // normalized [0,1]
    double V_s = 1.0;    // normalized [0,1]
    double T_core = 298.15; // K
    double T_surf = 298.15; // K
    bool decomp_depleted = false;
};

struct HeatRates {
    double q_ohm = 0.0;
    double q_ec = 0.0;
    double q_decomp = 0.0;
    double q_exo = 0.0;   // q_ec + q_decomp
    double q_total = 0.0; // q_ohm + q_exo
};

} // namespace battbee
