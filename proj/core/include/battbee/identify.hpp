#pragma once

#include "battbee/params.hpp"
#include "battbee/sim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace battbee::identify {

struct DataRow {
    double t;      // s, strictly increasing
    double I;      // A
    double V;      // V
    double T_surf; // K
};

struct DataSet {
    std::vector<DataRow> rows;
    double T_amb = 298.15;       // K
    double capacity_hint = 85016.659; // C
    double soc0 = 1.0;           // initial SoC fraction
    // Labeled fault window (required by fit_fault_parameters).
    std::optional<std::pair<double, double>> fault_window;

    void validate() const;
};

struct PwlSegment {
    double v_lo, v_hi;
    double a; // slope, V per unit V_s
    double b; // intercept, V
};

struct PwlOcv {
    std::vector<PwlSegment> segments; // partition of [0,1], continuous
    double psi_min = 0.0;             // global lower slope bound of U
    double psi_max = 0.0;             // global upper slope bound of U

    std::size_t segment_of(double v_s) const; // ties resolve to lower segment
    double eval(double v_s) const;
};

struct FitReport {
    BattBeeParams params;
    FaultInputs faults;
    double rmse_v = 0.0; // V
    double rmse_T = 0.0; // K
    std::size_t iterations = 0;
    std::vector<double> objective_trace;
};

/// Fittable scalar fields of (BattBeeParams, FaultInputs).
enum class Field {
    C_b, C_s, R_b, R_o, C_core, C_surf, R_core, R_surf0,
    h_ec, alpha1, alpha2, alpha3, alpha4, T_onset,
    g_isc1, g_isc2,
};

double get_field(const BattBeeParams& p, const FaultInputs& f, Field fd);
void set_field(BattBeeParams& p, FaultInputs& f, Field fd, double v);

struct FieldBound {
    Field field;
    double lo;
    double hi; // lo == hi pins the field
};

struct FitOptions {
    double w_V = 1.0;
    double w_T = 0.0;
    std::uint64_t seed = 0;
    int restarts = 4;
    int max_iterations = 4000;
    double tolerance = 1e-12; // simplex spread stop criterion on the objective
    double sim_dt = 0.0;      // 0 = derive from data sampling and stability bound
};

/// Seeded Nelder-Mead with restarts; deterministic for a fixed seed.
/// Returns the best point found and appends per-iteration best objective
/// values to trace when non-null.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                                const std::vector<double>& x0,
                                const std::vector<std::pair<double, double>>& bounds,
                                const FitOptions& opt,
                                std::size_t* iterations_out = nullptr,
                                std::vector<double>* trace = nullptr);

/// Least-squares OCV polynomial from low-rate data via Coulomb counting.
/// Refits at decreasing order on monotonicity failure. Throws on SoC coverage
/// below 80% of [0,1] or if the data is not low-rate (|I| > capacity/20 per hour).
OcvPolynomial fit_ocv(const DataSet& data, int order);

/// Fits the fields listed in bounds by minimizing
/// w_V*RMSE(V) + w_T*RMSE(T_surf) of simulated vs measured outputs.
FitReport fit_parameters(const std::vector<DataSet>& data, const BattBeeParams& init,
                         const std::vector<FieldBound>& bounds, const FitOptions& opt = {});

/// Same optimizer restricted to ISC/TR fields over the labeled fault window.
FitReport fit_fault_parameters(const DataSet& data, const BattBeeParams& base,
                               const std::vector<FieldBound>& bounds, const FitOptions& opt = {});

/// Greedy equal-error piecewise linearization; each segment chord keeps
/// max |U - (a v + b)| <= tolerance. Throws if more than max_segments needed.
PwlOcv piecewise_linearize(const OcvPolynomial& ocv, double tolerance,
                           std::size_t max_segments = 64);

/// Fixed segment count: bisects the tolerance until the greedy partition
/// lands on exactly m segments (or the closest achievable).
PwlOcv piecewise_linearize_segments(const OcvPolynomial& ocv, std::size_t m);

} // namespace battbee::identify
