#pragma once

#include "battbee/model.hpp"
#include "battbee/params.hpp"

#include <stdexcept>
#include <vector>

namespace battbee {

enum class CurrentInterp { hold, linear };

struct CurrentSample {
    double t = 0.0;
    double I = 0.0;
};

struct FaultEvent {
    double t = 0.0;
    double g_isc1 = 0.0;
    double g_isc2 = 0.0;
};

struct Scenario {
    double dt = 0.1;       // s
    double t_end = 10.0;   // s
    double T_amb = 298.15; // K
    CurrentInterp interp = CurrentInterp::hold;
    std::vector<CurrentSample> current; // time-sorted; empty means I = 0
    std::vector<FaultEvent> faults;     // strictly increasing in time
    SimState initial;
    double T_peak = 800.0; // K, overrides params latch cutoff

    double current_at(double t) const;
    void validate(const BattBeeParams& p) const;
};

struct TrajectoryRow {
    double t;
    double V_b, V_s;
    double soc;     // percent
    double V;       // terminal voltage
    double T_core, T_surf;
    double q_ohm, q_ec, q_decomp, q_exo;
    double I;
    double g_isc1, g_isc2;
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;
    CurrentInterp interp = CurrentInterp::hold;
    double dt = 0.0;
};

struct IntegrationError : std::runtime_error {
    IntegrationError(const std::string& what, double t) : std::runtime_error(what), t_fail(t) {}
    double t_fail;
};

/// One classical RK4 step with I and faults held constant; applies the [0,1]
/// clamp on V_b/V_s and the decomposition depletion latch afterwards.
/// T_peak <= 0 means "use p.T_peak".
SimState integrate_step(const BattBeeParams& p, const FaultInputs& f,
                        const SimState& s, double I, double T_amb, double dt,
                        double T_peak = 0.0);

Trajectory run_scenario(const BattBeeParams& p, const Scenario& sc);

/// Max deviation (fraction of capacity) between trajectory SoC and the
/// integral of the logged current. Rejects trajectories with fault-active rows.
double coulomb_check(const Trajectory& tr, const BattBeeParams& p);

} // namespace battbee
