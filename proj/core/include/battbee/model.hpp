#pragma once

#include "battbee/params.hpp"

#include <utility>

namespace battbee {

// Governing-equation evaluation for the equivalent-circuit model. All
// functions are pure; no shared mutable state.

/// U(V_s). Throws std::domain_error if V_s is outside [0,1] by more than 1e-9.
double ocv_eval(const OcvPolynomial& p, double v_s);

/// State of charge in percent.
double soc(const BattBeeParams& p, const SimState& s);

/// (dV_b/dt, dV_s/dt) in 1/s.
std::pair<double, double> electrical_derivatives(const BattBeeParams& p,
                                                 const FaultInputs& f,
                                                 const SimState& s, double I);

/// Terminal voltage V = [U(V_s) + I R_o] / (1 + R_o g_isc2).
double terminal_voltage(const BattBeeParams& p, const FaultInputs& f,
                        const SimState& s, double I);

double q_ohm(const BattBeeParams& p, double I);

/// ISC electrochemical heat, conductance form: h_ec * g_isc1 * V_s / (C_b + C_s).
/// With attribute_external_current the literal printed mixed-current form is
/// used instead; kept selectable for auditability.
double q_ec(const BattBeeParams& p, const FaultInputs& f, const SimState& s,
            double I, bool attribute_external_current = false);

/// Decomposition heat, zero once the depletion latch is set; saturates at
/// p.q_decomp_max and is evaluated overflow-safe in log space.
double q_decomp(const BattBeeParams& p, const SimState& s);

/// Temperature-dependent surface thermal resistance, clamped at
/// p.r_surf_min() when the linear law would drop below the floor.
double r_surf(const BattBeeParams& p, double T_surf, double T_amb);

/// All heat terms for the given operating point.
HeatRates heat_rates(const BattBeeParams& p, const FaultInputs& f,
                     const SimState& s, double I);

/// (dT_core/dt, dT_surf/dt) in K/s.
std::pair<double, double> thermal_derivatives(const BattBeeParams& p,
                                              const SimState& s,
                                              double q_total, double T_amb);

} // namespace battbee
