#pragma once

#include "battbee/identify.hpp"
#include "battbee/params.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace battbee::detect {

using Mat4 = Eigen::Matrix4d;
using Mat2x4 = Eigen::Matrix<double, 2, 4>;
using Mat4x2 = Eigen::Matrix<double, 4, 2>;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Fault-explicit state space with R_surf frozen at R_surf0.
/// State x = [V_b, V_s, T_core, T_surf], input u = [I, T_amb, I^2],
/// output y = [V, T_surf].
struct StateSpace {
    Mat4 A;
    Mat4 A_f;
    Eigen::Matrix<double, 4, 3> B;
    Vec4 B_f;
    Eigen::Matrix<double, 2, 3> D;
    Vec2 D_f;
};

StateSpace assemble_state_space(const BattBeeParams& p);

/// (f1 [1/ohm], f2 [W], f3 [V]) as in the fault-explicit form.
struct FaultSignals {
    double f1, f2, f3;
};
FaultSignals fault_signals(const BattBeeParams& p, const FaultInputs& f,
                           const SimState& s, double I);

/// Output matrix of the piecewise-linear submodel with slope a.
Mat2x4 output_matrix(double slope);

struct LinearSubmodel {
    std::size_t index = 0;
    Mat2x4 C;          // output matrix with the segment slope
    double b_offset = 0.0;
    double v_lo = 0.0, v_hi = 1.0;
    Mat4x2 L;          // observer gain
    Mat4 A_tilde;      // A - L*C, Hurwitz after synthesis
};

struct Thresholds {
    std::vector<double> j2_per_segment;
    std::vector<double> jinf_per_segment;
    double j2 = 0.0;   // conservative max over segments
    double jinf = 0.0;
    double delta = 0.0;
    double inflation = 1.0;
};

struct DetectorState {
    Vec4 x_hat = Vec4::Zero();
    std::size_t segment = 0;
    double j2_sq_accum = 0.0;
    double jinf_running = 0.0;
    double eta = 0.95;       // forgetting factor per sampling period
    double eta_period = 1.0; // s, period the recursion's eta refers to
    bool alarm = false;
    double alarm_time = 0.0;

    double j2() const { return std::sqrt(j2_sq_accum); }
};

/// Steady-state Kalman estimator gain L = P C^T R^-1 with P from the filter
/// algebraic Riccati equation, solved by integrating the differential Riccati
/// equation to convergence. Throws on non-detectable (A, C).
Mat4x2 kalman_gain(const StateSpace& ss, const Mat2x4& C, const Mat4& Q_proc,
                   const Mat2& R_meas);

/// Checks the observer stability inequality at both slope vertices.
struct StabilityResult {
    bool stable = false;
    double margin = 0.0; // -max eigenvalue over both vertices
};
StabilityResult verify_stability(const StateSpace& ss, const Mat4x2& L, const Mat4& P,
                                 const Mat4& Q, double psi_min, double psi_max);

/// Residual-bound thresholds for the nonlinear observer path. Requires a
/// verified (P, Q, L); epsilon is the largest feasible decay rate.
struct NonlinearThresholds {
    double j2 = 0.0;
    double jinf = 0.0;
    double epsilon = 0.0;
};
NonlinearThresholds threshold_nonlinear(const Mat4& P, const Mat4& Q, double psi_max,
                                        double delta, bool stability_verified);

/// Candidate (L, P, Q, epsilon) built from the mid-slope segment and checked
/// at the slope vertices; nullopt when the vertex check fails.
struct NonlinearCertificate {
    Mat4x2 L;
    Mat4 P;
    Mat4 Q;
    double epsilon = 0.0;
    double margin = 0.0;
};
std::optional<NonlinearCertificate> synthesize_nonlinear_certificate(
    const StateSpace& ss, double psi_min, double psi_max, const Mat4& Q_proc,
    const Mat2& R_meas);

/// Observability Gramian: solves A_tilde^T W + W A_tilde = -C^T C through the
/// Kronecker-vectorized linear system. Throws on near-singular systems.
Mat4 solve_lyapunov(const Mat4& A_tilde, const Mat2x4& C);

/// Per-segment residual bounds: J2 from the Gramian norm, Jinf from a
/// refined log-spaced sup of ||C exp(A_tilde tau)||.
std::pair<double, double> threshold_linear(const LinearSubmodel& m, double delta);

/// max over segments, plus delta/inflation bookkeeping.
Thresholds conservative_threshold(const std::vector<LinearSubmodel>& segments,
                                  double delta, double inflation);

/// Nonlinear observer update; the residual is held constant over the step.
/// Returns the residual computed at entry.
Vec2 nonlinear_observer_step(const BattBeeParams& p, const StateSpace& ss,
                             const Mat4x2& L, DetectorState& det, const Vec2& y,
                             const Vec3& u, double dt);

/// Linear observer update in the regime of submodel m; z = [V - b_i, T_surf].
/// Throws when the estimated V_s lies outside the segment validity interval.
Vec2 linear_observer_step(const StateSpace& ss, const LinearSubmodel& m,
                          DetectorState& det, const Vec2& z, const Vec3& u, double dt);

void j2_update(DetectorState& det, const Vec2& r, double dt);
void jinf_update(DetectorState& det, const Vec2& r);

/// Latching alarm decision against the inflated conservative thresholds.
bool decide(DetectorState& det, const Thresholds& thr, double t);

std::size_t segment_select(const identify::PwlOcv& pwl, double v_s_hat);

/// Full streaming pipeline: segment-scheduled linear observers with Kalman
/// gains, per-segment residual thresholds, and the latching decision logic.
class Detector {
  public:
    struct Config {
        Mat4 Q_proc;
        Mat2 R_meas;
        double delta = 0.0; // scalar initial-error bound
        double eta = 0.95;
        double eta_period = 1.0;
        double inflation = 1.0;

        Config();
    };

    struct StepRecord {
        double t;
        double r_v, r_T;
        double j2, jinf;
        std::size_t segment;
        bool alarm;
    };

    Detector(const BattBeeParams& p, identify::PwlOcv pwl, const Config& cfg);

    /// Advances one telemetry sample; dt is the time since the previous one.
    StepRecord step(double t, double I, double V, double T_surf, double T_amb, double dt);

    void reset(const Vec4& x_hat0);

    const Thresholds& thresholds() const { return thresholds_; }
    const std::vector<LinearSubmodel>& submodels() const { return submodels_; }
    const DetectorState& state() const { return state_; }
    const StateSpace& state_space() const { return ss_; }

  private:
    BattBeeParams params_;
    identify::PwlOcv pwl_;
    StateSpace ss_;
    std::vector<LinearSubmodel> submodels_;
    Thresholds thresholds_;
    DetectorState state_;
};

} // namespace battbee::detect
