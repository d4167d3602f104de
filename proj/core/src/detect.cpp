#include "battbee/detect.hpp"

#include "battbee/log.hpp"
#include "battbee/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace battbee::detect {

namespace {

Mat4 symmetrized(const Mat4& m) { return 0.5 * (m + m.transpose()); }

double max_real_eigenvalue(const Mat4& m) {
    Eigen::EigenSolver<Mat4> es(m, false);
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) worst = std::max(worst, es.eigenvalues()(i).real());
    return worst;
}

bool is_hurwitz(const Mat4& m) { return max_real_eigenvalue(m) < 0.0; }

/// Solves A^T X + X A = -RHS (RHS symmetric) through the 16x16 Kronecker form.
Mat4 solve_lyapunov_rhs(const Mat4& A, const Mat4& rhs) {
    Eigen::Matrix<double, 16, 16> K = Eigen::Matrix<double, 16, 16>::Zero();
    const Mat4 I = Mat4::Identity();
    // vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X), column-major vec.
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) {
                    // block (j,l) of I (x) A^T, entry (i,k); plus A^T (x) I.
                    K(4 * j + i, 4 * l + k) += I(j, l) * A(k, i) + A(l, j) * I(i, k);
                }
    Eigen::Matrix<double, 16, 1> b;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) b(4 * j + i) = -rhs(i, j);
    Eigen::Matrix<double, 16, 1> x = K.fullPivLu().solve(b);
    Mat4 W;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) W(i, j) = x(4 * j + i);
    W = symmetrized(W);
    const double res = (A.transpose() * W + W * A + rhs).norm();
    if (!W.allFinite() || res > 1e-8 * std::max(rhs.norm(), 1e-30))
        throw std::runtime_error("solve_lyapunov: ill-conditioned system (eigenvalue pair near zero sum)");
    return W;
}

double spectral_norm(const Eigen::MatrixXd& m) {
    return m.jacobiSvd().singularValues()(0);
}

} // namespace

StateSpace assemble_state_space(const BattBeeParams& p) {
    StateSpace ss;
    const double k_b = 1.0 / (p.R_b * p.C_b);
    const double k_s = 1.0 / (p.R_b * p.C_s);
    const double k_cc = 1.0 / (p.R_core * p.C_core);
    const double k_cs = 1.0 / (p.R_core * p.C_surf);
    const double k_ss = 1.0 / (p.R_surf0 * p.C_surf);

    ss.A << -k_b, k_b, 0.0, 0.0,
            k_s, -k_s, 0.0, 0.0,
            0.0, 0.0, -k_cc, k_cc,
            0.0, 0.0, k_cs, -k_cs - k_ss;

    ss.A_f = Mat4::Zero();
    ss.A_f(1, 1) = -1.0 / p.C_s;

    ss.B.setZero();
    ss.B(1, 0) = 1.0 / p.C_s;
    ss.B(2, 2) = p.R_o / p.C_core;
    ss.B(3, 1) = k_ss;

    ss.B_f << 0.0, 0.0, 1.0 / p.C_core, 0.0;

    ss.D.setZero();
    ss.D(0, 0) = p.R_o;

    ss.D_f << 1.0, 0.0;
    return ss;
}

FaultSignals fault_signals(const BattBeeParams& p, const FaultInputs& f,
                           const SimState& s, double I) {
    const HeatRates h = heat_rates(p, f, s, I);
    const double u = ocv_eval(p.ocv, s.V_s) + p.R_o * I;
    const double f3 = -p.R_o * f.g_isc2 / (1.0 + p.R_o * f.g_isc2) * u;
    return {f.g_isc1, h.q_exo, f3};
}

Mat2x4 output_matrix(double slope) {
    Mat2x4 c;
    c << 0.0, slope, 0.0, 0.0,
         0.0, 0.0, 0.0, 1.0;
    return c;
}

Mat4x2 kalman_gain(const StateSpace& ss, const Mat2x4& C, const Mat4& Q_proc,
                   const Mat2& R_meas) {
    if (max_real_eigenvalue(symmetrized(Q_proc)) < 0.0 ||
        Q_proc.minCoeff() != Q_proc.minCoeff())
        throw std::invalid_argument("kalman_gain: Q_proc must be PSD");
    Eigen::SelfAdjointEigenSolver<Mat2> rs(R_meas);
    if (rs.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("kalman_gain: R_meas must be positive definite");

    // Detectability (PBH on eigenvalues with nonnegative real part).
    Eigen::EigenSolver<Mat4> es(ss.A);
    for (int i = 0; i < 4; ++i) {
        const std::complex<double> lam = es.eigenvalues()(i);
        if (lam.real() < -1e-12) continue;
        Eigen::Matrix<std::complex<double>, 6, 4> pbh;
        pbh.topRows<4>() = lam * Mat4::Identity().cast<std::complex<double>>() -
                           ss.A.cast<std::complex<double>>();
        pbh.bottomRows<2>() = C.cast<std::complex<double>>();
        if (pbh.fullPivLu().rank() < 4)
            throw std::runtime_error("kalman_gain: (A, C) not detectable");
    }

    const Mat2 R_inv = R_meas.inverse();
    const Mat4 S = C.transpose() * R_inv * C; // information rate

    auto riccati_rhs = [&](const Mat4& P) -> Mat4 {
        return ss.A * P + P * ss.A.transpose() - P * S * P + Q_proc;
    };

    Mat4 P = Q_proc;
    const double scale = ss.A.norm() + 1e-12;
    double dt = 0.02 / scale;
    const double dt_cap = 1.0 / scale;
    const double target = 1e-10 * std::max(Q_proc.norm(), 1e-20);
    double prev_res = std::numeric_limits<double>::infinity();

    for (long iter = 0; iter < 4'000'000; ++iter) {
        const Mat4 k1 = riccati_rhs(P);
        const Mat4 k2 = riccati_rhs(P + 0.5 * dt * k1);
        const Mat4 k3 = riccati_rhs(P + 0.5 * dt * k2);
        const Mat4 k4 = riccati_rhs(P + dt * k3);
        Mat4 Pn = P + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        Pn = symmetrized(Pn);
        if (!Pn.allFinite()) {
            dt *= 0.5;
            continue;
        }
        P = Pn;
        if ((iter & 0xF) == 0) {
            const double res = riccati_rhs(P).norm();
            if (res <= target) break;
            if (res < prev_res) dt = std::min(dt * 1.2, dt_cap);
            prev_res = res;
        }
    }
    if (riccati_rhs(P).norm() > 1e-8 * std::max(Q_proc.norm(), 1e-20))
        throw std::runtime_error("kalman_gain: Riccati iteration did not converge");
    return P * C.transpose() * R_inv;
}

StabilityResult verify_stability(const StateSpace& ss, const Mat4x2& L, const Mat4& P,
                                 const Mat4& Q, double psi_min, double psi_max) {
    Eigen::SelfAdjointEigenSolver<Mat4> ps(P), qs(Q);
    if (ps.eigenvalues().minCoeff() <= 0.0 || qs.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("verify_stability: P and Q must be positive definite");

    double worst = -std::numeric_limits<double>::infinity();
    for (double psi : {psi_min, psi_max}) {
        const Mat2x4 H = output_matrix(psi);
        const Mat4 M = ss.A.transpose() * P + P * ss.A - H.transpose() * L.transpose() * P -
                       P * L * H + Q;
        Eigen::SelfAdjointEigenSolver<Mat4> ms(symmetrized(M));
        worst = std::max(worst, ms.eigenvalues().maxCoeff());
    }
    return {worst <= 0.0, -worst};
}

NonlinearThresholds threshold_nonlinear(const Mat4& P, const Mat4& Q, double psi_max,
                                        double delta, bool stability_verified) {
    if (!stability_verified)
        throw std::invalid_argument("threshold_nonlinear: stability not verified");
    Eigen::SelfAdjointEigenSolver<Mat4> ps(P);
    const double lam_min = ps.eigenvalues().minCoeff();
    const double lam_max = ps.eigenvalues().maxCoeff();
    if (lam_min <= 0.0) throw std::invalid_argument("threshold_nonlinear: P must be positive definite");

    // Largest epsilon with eps*P - Q <= 0: smallest generalized eigenvalue of
    // Q x = eps P x.
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat4> ges(Q, P);
    const double eps = ges.eigenvalues().minCoeff();
    if (!(eps > 0.0)) throw std::runtime_error("threshold_nonlinear: no feasible epsilon");

    const double gain = std::max(psi_max * psi_max, 1.0) * lam_max / lam_min;
    NonlinearThresholds out;
    out.epsilon = eps;
    out.jinf = std::sqrt(gain) * delta;
    out.j2 = std::sqrt(gain / eps) * delta;
    return out;
}

std::optional<NonlinearCertificate> synthesize_nonlinear_certificate(
    const StateSpace& ss, double psi_min, double psi_max, const Mat4& Q_proc,
    const Mat2& R_meas) {
    const double psi_mid = 0.5 * (psi_min + psi_max);
    const Mat2x4 C_mid = output_matrix(psi_mid);
    Mat4x2 L;
    try {
        L = kalman_gain(ss, C_mid, Q_proc, R_meas);
    } catch (const std::exception& e) {
        log::warn(std::string("nonlinear certificate: gain synthesis failed: ") + e.what());
        return std::nullopt;
    }
    const Mat4 A_tilde = ss.A - L * C_mid;
    if (!is_hurwitz(A_tilde)) return std::nullopt;

    Mat4 P;
    try {
        P = solve_lyapunov_rhs(A_tilde, Mat4::Identity());
    } catch (const std::exception&) {
        return std::nullopt;
    }

    // Vertex check without Q, then pick Q as half the available margin.
    double mu = -std::numeric_limits<double>::infinity();
    for (double psi : {psi_min, psi_max}) {
        const Mat2x4 H = output_matrix(psi);
        const Mat4 M0 = ss.A.transpose() * P + P * ss.A - H.transpose() * L.transpose() * P -
                        P * L * H;
        Eigen::SelfAdjointEigenSolver<Mat4> ms(symmetrized(M0));
        mu = std::max(mu, ms.eigenvalues().maxCoeff());
    }
    if (!(mu < 0.0)) return std::nullopt;

    NonlinearCertificate cert;
    cert.L = L;
    cert.P = P;
    cert.Q = (-mu / 2.0) * Mat4::Identity();
    const StabilityResult sr = verify_stability(ss, L, P, cert.Q, psi_min, psi_max);
    if (!sr.stable) return std::nullopt;
    cert.margin = sr.margin;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat4> ges(cert.Q, P);
    cert.epsilon = ges.eigenvalues().minCoeff();
    return cert;
}

Mat4 solve_lyapunov(const Mat4& A_tilde, const Mat2x4& C) {
    return solve_lyapunov_rhs(A_tilde, C.transpose() * C);
}

std::pair<double, double> threshold_linear(const LinearSubmodel& m, double delta) {
    if (!is_hurwitz(m.A_tilde))
        throw std::invalid_argument("threshold_linear: A_tilde is not Hurwitz");
    const Mat4 W = solve_lyapunov(m.A_tilde, m.C);
    Eigen::SelfAdjointEigenSolver<Mat4> ws(W);
    const double j2 = std::sqrt(std::max(ws.eigenvalues().maxCoeff(), 0.0)) * delta;

    // sup over tau of ||C exp(A_tilde tau)||, log-spaced grid refined until
    // the sup moves by <= 0.1%.
    Eigen::EigenSolver<Mat4> es(m.A_tilde, false);
    double slowest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i)
        slowest = std::min(slowest, -es.eigenvalues()(i).real());
    const double t_max = 40.0 / slowest;

    double sup = spectral_norm(m.C); // tau -> 0+
    int n = 64;
    for (int refine = 0; refine < 8; ++refine) {
        double cur = spectral_norm(m.C);
        for (int k = 0; k <= n; ++k) {
            const double tau = t_max * std::pow(1e-6, 1.0 - static_cast<double>(k) / n);
            const Mat4 e = (m.A_tilde * tau).exp();
            cur = std::max(cur, spectral_norm(m.C * e));
        }
        if (std::abs(cur - sup) <= 1e-3 * sup) {
            sup = std::max(sup, cur);
            break;
        }
        sup = std::max(sup, cur);
        n *= 2;
    }
    return {j2, sup * delta};
}

Thresholds conservative_threshold(const std::vector<LinearSubmodel>& segments,
                                  double delta, double inflation) {
    if (segments.empty()) throw std::invalid_argument("conservative_threshold: no segments");
    Thresholds thr;
    thr.delta = delta;
    thr.inflation = inflation;
    for (const auto& m : segments) {
        const auto [j2, jinf] = threshold_linear(m, delta);
        thr.j2_per_segment.push_back(j2);
        thr.jinf_per_segment.push_back(jinf);
        thr.j2 = std::max(thr.j2, j2);
        thr.jinf = std::max(thr.jinf, jinf);
    }
    return thr;
}

namespace {

Vec4 rk4_observer(const Mat4& A, const Eigen::Matrix<double, 4, 3>& B, const Vec4& x,
                  const Vec3& u, const Vec4& forcing, double dt) {
    auto f = [&](const Vec4& v) -> Vec4 { return A * v + B * u + forcing; };
    // substep so |lambda|*h stays well inside the RK4 stability region even at
    // slow telemetry rates; u and forcing are held over the whole interval
    const int m = std::max(1, static_cast<int>(std::ceil(dt * A.cwiseAbs().rowwise().sum().maxCoeff() / 0.5)));
    const double h = dt / m;
    Vec4 y = x;
    for (int i = 0; i < m; ++i) {
        const Vec4 k1 = f(y);
        const Vec4 k2 = f(y + 0.5 * h * k1);
        const Vec4 k3 = f(y + 0.5 * h * k2);
        const Vec4 k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

} // namespace

Vec2 nonlinear_observer_step(const BattBeeParams& p, const StateSpace& ss,
                             const Mat4x2& L, DetectorState& det, const Vec2& y,
                             const Vec3& u, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("nonlinear_observer_step: dt must be > 0");
    if (!y.allFinite()) throw std::invalid_argument("nonlinear_observer_step: non-finite measurement");
    const double v_s_hat = std::clamp(det.x_hat(1), 0.0, 1.0);
    Vec2 h;
    h << ocv_eval(p.ocv, v_s_hat), det.x_hat(3);
    const Vec2 r = y - h - ss.D * u;
    det.x_hat = rk4_observer(ss.A, ss.B, det.x_hat, u, L * r, dt);
    return r;
}

Vec2 linear_observer_step(const StateSpace& ss, const LinearSubmodel& m,
                          DetectorState& det, const Vec2& z, const Vec3& u, double dt) {
    const double v_s_hat = det.x_hat(1);
    if (v_s_hat < m.v_lo - 1e-9 || v_s_hat > m.v_hi + 1e-9)
        throw std::runtime_error("linear_observer_step: estimate outside segment validity");
    const Vec2 r = z - m.C * det.x_hat - ss.D * u;
    // Fully linear closed loop: the measurement is held over the step but the
    // feedback C x_hat is integrated continuously.
    det.x_hat = rk4_observer(m.A_tilde, ss.B, det.x_hat, u, m.L * (z - ss.D * u), dt);
    return r;
}

void j2_update(DetectorState& det, const Vec2& r, double dt) {
    if (!(det.eta > 0.0) || det.eta > 1.0)
        throw std::invalid_argument("j2_update: eta must be in (0,1]");
    const double decay = det.eta == 1.0 ? 1.0 : std::pow(det.eta, dt / det.eta_period);
    det.j2_sq_accum = decay * det.j2_sq_accum + r.squaredNorm() * dt;
}

void jinf_update(DetectorState& det, const Vec2& r) {
    det.jinf_running = std::max(det.jinf_running, r.norm());
}

bool decide(DetectorState& det, const Thresholds& thr, double t) {
    if (!det.alarm) {
        const bool hit = det.j2() > thr.j2 * thr.inflation ||
                         det.jinf_running > thr.jinf * thr.inflation;
        if (hit) {
            det.alarm = true;
            det.alarm_time = t;
        }
    }
    return det.alarm;
}

std::size_t segment_select(const identify::PwlOcv& pwl, double v_s_hat) {
    if (v_s_hat < 0.0 || v_s_hat > 1.0)
        throw std::domain_error("segment_select: V_s outside [0,1]");
    return pwl.segment_of(v_s_hat);
}

Detector::Config::Config() {
    Q_proc = Vec4(1e-8, 1e-8, 1e-4, 1e-4).asDiagonal();
    R_meas = Vec2(1e-4, 1e-2).asDiagonal();
}

Detector::Detector(const BattBeeParams& p, identify::PwlOcv pwl, const Config& cfg)
    : params_(p), pwl_(std::move(pwl)), ss_(assemble_state_space(p)) {
    if (pwl_.segments.empty()) throw std::invalid_argument("Detector: empty piecewise OCV");
    submodels_.reserve(pwl_.segments.size());
    for (std::size_t i = 0; i < pwl_.segments.size(); ++i) {
        const auto& seg = pwl_.segments[i];
        LinearSubmodel m;
        m.index = i;
        m.C = output_matrix(seg.a);
        m.b_offset = seg.b;
        m.v_lo = seg.v_lo;
        m.v_hi = seg.v_hi;
        m.L = kalman_gain(ss_, m.C, cfg.Q_proc, cfg.R_meas);
        m.A_tilde = ss_.A - m.L * m.C;
        if (!is_hurwitz(m.A_tilde))
            throw std::runtime_error("Detector: closed loop not Hurwitz for segment " +
                                     std::to_string(i));
        submodels_.push_back(std::move(m));
    }
    thresholds_ = conservative_threshold(submodels_, cfg.delta, cfg.inflation);
    state_.eta = cfg.eta;
    state_.eta_period = cfg.eta_period;
}

void Detector::reset(const Vec4& x_hat0) {
    const double eta = state_.eta;
    const double period = state_.eta_period;
    state_ = DetectorState{};
    state_.x_hat = x_hat0;
    state_.eta = eta;
    state_.eta_period = period;
}

Detector::StepRecord Detector::step(double t, double I, double V, double T_surf,
                                    double T_amb, double dt) {
    const double v_s_hat = std::clamp(state_.x_hat(1), 0.0, 1.0);
    state_.segment = pwl_.segment_of(v_s_hat);
    const LinearSubmodel& m = submodels_[state_.segment];

    Vec3 u(I, T_amb, I * I);
    Vec2 z(V - m.b_offset, T_surf);

    DetectorState& det = state_;
    const Vec2 r = z - m.C * det.x_hat - ss_.D * u;
    det.x_hat = rk4_observer(m.A_tilde, ss_.B, det.x_hat, u, m.L * (z - ss_.D * u), dt);

    j2_update(det, r, dt);
    jinf_update(det, r);
    decide(det, thresholds_, t);

    return {t, r(0), r(1), det.j2(), det.jinf_running, det.segment, det.alarm};
}

} // namespace battbee::detect
