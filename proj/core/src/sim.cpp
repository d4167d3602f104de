#include "battbee/sim.hpp"

#include "battbee/log.hpp"

#include <algorithm>
#include <cmath>

namespace battbee {

namespace {

struct Derivs {
    double dVb, dVs, dTc, dTs;
};

Derivs eval_derivatives(const BattBeeParams& p, const FaultInputs& f,
                        const SimState& s, double I, double T_amb) {
    auto [dVb, dVs] = electrical_derivatives(p, f, s, I);
    const HeatRates h = heat_rates(p, f, s, I);
    auto [dTc, dTs] = thermal_derivatives(p, s, h.q_total, T_amb);
    return {dVb, dVs, dTc, dTs};
}

void check_finite(const Derivs& d, double t) {
    if (!std::isfinite(d.dVb)) throw IntegrationError("non-finite dV_b/dt", t);
    if (!std::isfinite(d.dVs)) throw IntegrationError("non-finite dV_s/dt", t);
    if (!std::isfinite(d.dTc)) throw IntegrationError("non-finite dT_core/dt", t);
    if (!std::isfinite(d.dTs)) throw IntegrationError("non-finite dT_surf/dt", t);
}

SimState advanced(const SimState& s, const Derivs& d, double h) {
    SimState n = s;
    n.V_b = s.V_b + h * d.dVb;
    n.V_s = s.V_s + h * d.dVs;
    n.T_core = s.T_core + h * d.dTc;
    n.T_surf = s.T_surf + h * d.dTs;
    return n;
}

} // namespace

double Scenario::current_at(double t) const {
    if (current.empty()) return 0.0;
    if (t <= current.front().t) return current.front().I;
    if (t >= current.back().t) return current.back().I;
    auto it = std::upper_bound(current.begin(), current.end(), t,
                               [](double v, const CurrentSample& s) { return v < s.t; });
    const CurrentSample& hi = *it;
    const CurrentSample& lo = *(it - 1);
    if (interp == CurrentInterp::hold) return lo.I;
    const double w = (t - lo.t) / (hi.t - lo.t);
    return lo.I + w * (hi.I - lo.I);
}

void Scenario::validate(const BattBeeParams& p) const {
    if (!(dt > 0.0)) throw std::invalid_argument("Scenario: dt must be > 0");
    if (!(t_end >= 0.0)) throw std::invalid_argument("Scenario: t_end must be >= 0");
    const double dt_max = std::min(p.R_b * p.C_s, p.R_core * p.C_surf) / 20.0;
    if (dt > dt_max)
        throw std::invalid_argument("Scenario: dt exceeds stability bound min(R_b*C_s, R_core*C_surf)/20 = " +
                                    std::to_string(dt_max));
    for (std::size_t i = 0; i + 1 < faults.size(); ++i)
        if (!(faults[i].t < faults[i + 1].t))
            throw std::invalid_argument("Scenario: fault events must be strictly increasing in time");
    for (const auto& ev : faults)
        if (ev.g_isc1 < 0.0 || ev.g_isc2 < 0.0)
            throw std::invalid_argument("Scenario: fault conductances must be >= 0");
    for (std::size_t i = 0; i + 1 < current.size(); ++i)
        if (!(current[i].t <= current[i + 1].t))
            throw std::invalid_argument("Scenario: current samples must be time-sorted");
}

SimState integrate_step(const BattBeeParams& p, const FaultInputs& f,
                        const SimState& s, double I, double T_amb, double dt,
                        double T_peak) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be > 0");
    const double t_peak = T_peak > 0.0 ? T_peak : p.T_peak;

    const Derivs k1 = eval_derivatives(p, f, s, I, T_amb);
    check_finite(k1, 0.0);
    const Derivs k2 = eval_derivatives(p, f, advanced(s, k1, dt / 2.0), I, T_amb);
    check_finite(k2, 0.0);
    const Derivs k3 = eval_derivatives(p, f, advanced(s, k2, dt / 2.0), I, T_amb);
    check_finite(k3, 0.0);
    const Derivs k4 = eval_derivatives(p, f, advanced(s, k3, dt), I, T_amb);
    check_finite(k4, 0.0);

    SimState n = s;
    n.V_b += dt / 6.0 * (k1.dVb + 2.0 * k2.dVb + 2.0 * k3.dVb + k4.dVb);
    n.V_s += dt / 6.0 * (k1.dVs + 2.0 * k2.dVs + 2.0 * k3.dVs + k4.dVs);
    n.T_core += dt / 6.0 * (k1.dTc + 2.0 * k2.dTc + 2.0 * k3.dTc + k4.dTc);
    n.T_surf += dt / 6.0 * (k1.dTs + 2.0 * k2.dTs + 2.0 * k3.dTs + k4.dTs);

    if (n.V_b < 0.0 || n.V_b > 1.0) {
        log::debug("integrate_step: clamped V_b");
        n.V_b = std::clamp(n.V_b, 0.0, 1.0);
    }
    if (n.V_s < 0.0 || n.V_s > 1.0) {
        log::debug("integrate_step: clamped V_s");
        n.V_s = std::clamp(n.V_s, 0.0, 1.0);
    }
    if (!n.decomp_depleted && (n.T_core >= t_peak || n.T_surf >= t_peak)) {
        n.decomp_depleted = true;
        log::info("integrate_step: decomposition depletion latch set");
    }
    return n;
}

Trajectory run_scenario(const BattBeeParams& p, const Scenario& sc) {
    sc.validate(p);

    Trajectory tr;
    tr.interp = sc.interp;
    tr.dt = sc.dt;
    const auto n_steps = static_cast<std::size_t>(std::llround(sc.t_end / sc.dt));
    tr.rows.reserve(n_steps + 1);

    SimState s = sc.initial;
    FaultInputs f;
    std::size_t next_fault = 0;

    auto log_row = [&](double t) {
        const double I_row = sc.current_at(t);
        const HeatRates h = heat_rates(p, f, s, I_row);
        TrajectoryRow row{t,      s.V_b,   s.V_s,      soc(p, s), terminal_voltage(p, f, s, I_row),
                          s.T_core, s.T_surf, h.q_ohm, h.q_ec,    h.q_decomp,
                          h.q_exo,  I_row,   f.g_isc1,  f.g_isc2};
        tr.rows.push_back(row);
    };

    for (std::size_t k = 0; k <= n_steps; ++k) {
        const double t = static_cast<double>(k) * sc.dt;
        // A fault event lands on the first grid point at or after its time.
        while (next_fault < sc.faults.size() && sc.faults[next_fault].t <= t + sc.dt * 1e-9) {
            f.g_isc1 = sc.faults[next_fault].g_isc1;
            f.g_isc2 = sc.faults[next_fault].g_isc2;
            ++next_fault;
        }
        log_row(t);
        if (k == n_steps) break;
        // Midpoint current sampling keeps the charge integral consistent with
        // the instantaneous values logged at the grid points.
        const double I_step = sc.current_at(t + sc.dt / 2.0);
        try {
            s = integrate_step(p, f, s, I_step, sc.T_amb, sc.dt, sc.T_peak);
        } catch (const IntegrationError& e) {
            throw IntegrationError(std::string(e.what()) + " at t=" + std::to_string(t), t);
        }
    }
    return tr;
}

double coulomb_check(const Trajectory& tr, const BattBeeParams& p) {
    if (tr.rows.size() < 2) return 0.0;
    for (const auto& row : tr.rows)
        if (row.g_isc1 != 0.0 || row.g_isc2 != 0.0)
            throw std::invalid_argument("coulomb_check: trajectory contains fault-active rows");

    const double cap = p.capacity();
    const double soc0 = tr.rows.front().soc / 100.0;
    double charge = 0.0; // coulombs
    double worst = 0.0;
    for (std::size_t k = 1; k < tr.rows.size(); ++k) {
        const auto& a = tr.rows[k - 1];
        const auto& b = tr.rows[k];
        const double h = b.t - a.t;
        charge += tr.interp == CurrentInterp::hold ? a.I * h : 0.5 * (a.I + b.I) * h;
        const double dev = std::abs(b.soc / 100.0 - soc0 - charge / cap);
        worst = std::max(worst, dev);
    }
    return worst;
}

} // namespace battbee
