#include "battbee/spm.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace battbee::spm {

namespace {

double poly_eval(const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
}

} // namespace

double ElectrodeParams::inner_radius() const {
    return r_b > 0.0 ? r_b : r_s * std::pow(0.5, 1.0 / 3.0);
}

double ElectrodeParams::S_b() const {
    const double rb = inner_radius();
    return 4.0 * std::numbers::pi * rb * rb;
}

double ElectrodeParams::S_s() const { return 4.0 * std::numbers::pi * r_s * r_s; }

double ElectrodeParams::dv_b() const {
    const double rb = inner_radius();
    return 4.0 / 3.0 * std::numbers::pi * rb * rb * rb;
}

double ElectrodeParams::dv_s() const {
    const double rb = inner_radius();
    return 4.0 / 3.0 * std::numbers::pi * (r_s * r_s * r_s - rb * rb * rb);
}

void SpmParams::validate() const {
    auto check_electrode = [](const ElectrodeParams& e, const char* which) {
        if (!(e.inner_radius() > 0.0) || !(e.inner_radius() < e.r_s))
            throw std::invalid_argument(std::string("SpmParams: need 0 < r_b < r_s for ") + which);
        if (!(e.D_s > 0.0) || !(e.a > 0.0) || !(e.L > 0.0) || !(e.i0 > 0.0) ||
            !(e.c_max > 0.0) || e.R_f < 0.0)
            throw std::invalid_argument(std::string("SpmParams: nonpositive geometry/kinetics for ") + which);
    };
    check_electrode(pos, "positive electrode");
    check_electrode(neg, "negative electrode");
    if (!(S > 0.0)) throw std::invalid_argument("SpmParams: S must be > 0");
    if (!(alpha_ct > 0.0) || !(alpha_ct <= 1.0))
        throw std::invalid_argument("SpmParams: alpha_ct must be in (0,1]");
    if (g_sep < 0.0) throw std::invalid_argument("SpmParams: g_sep must be >= 0");
    if (!(theta_neg_lo < theta_neg_hi) || !(theta_pos_lo < theta_pos_hi))
        throw std::invalid_argument("SpmParams: degenerate stoichiometry window");
}

SpmState equilibrium_state(const SpmParams& p, double v) {
    const double th_neg = p.theta_neg_lo + v * (p.theta_neg_hi - p.theta_neg_lo);
    const double th_pos = p.theta_pos_hi - v * (p.theta_pos_hi - p.theta_pos_lo);
    SpmState s;
    s.cbar_b_pos = s.cbar_s_pos = th_pos * p.pos.c_max;
    s.cbar_b_neg = s.cbar_s_neg = th_neg * p.neg.c_max;
    return s;
}

double overpotential(const SpmParams& p, const ElectrodeParams& e, double sign,
                     double I_net) {
    const double arg = sign * I_net / (2.0 * e.i0 * e.a * e.L * p.S);
    if (!std::isfinite(arg))
        throw std::runtime_error(sign > 0 ? "overpotential: non-finite argument (positive electrode)"
                                          : "overpotential: non-finite argument (negative electrode)");
    return kGasConstant * p.T / (p.alpha_ct * kFaraday) * std::asinh(arg);
}

namespace {

// Internal potential across the separator: OCP difference plus reaction
// overpotentials. Coupled to I_ISC through the overpotentials, so solved by a
// short fixed-point iteration (contracting: asinh is 1-Lipschitz-flat here).
double separator_potential(const SpmParams& p, const SpmState& s, double I,
                           double& I_isc_out) {
    const double U_pos = poly_eval(p.pos.ocp, s.cbar_s_pos / p.pos.c_max);
    const double U_neg = poly_eval(p.neg.ocp, s.cbar_s_neg / p.neg.c_max);
    double I_isc = 0.0;
    double dU = U_pos - U_neg;
    if (p.g_sep > 0.0) {
        for (int it = 0; it < 8; ++it) {
            const double I_net = I - I_isc;
            dU = U_pos - U_neg + overpotential(p, p.pos, +1.0, I_net) -
                 overpotential(p, p.neg, -1.0, I_net);
            I_isc = p.g_sep * dU;
        }
    }
    I_isc_out = I_isc;
    return dU;
}

} // namespace

double spm_isc_current(const SpmParams& p, const SpmState& s, double I) {
    if (p.g_sep == 0.0) return 0.0;
    double I_isc = 0.0;
    separator_potential(p, s, I, I_isc);
    return I_isc;
}

std::array<double, 4> cbar_derivatives(const SpmParams& p, const SpmState& s, double I) {
    const double I_net = I - spm_isc_current(p, s, I);
    auto electrode = [&](const ElectrodeParams& e, double cb, double cs, double sign,
                         double& dcb, double& dcs) {
        const double k_diff = 2.0 * e.D_s * e.S_b() / e.r_s;
        dcb = k_diff / e.dv_b() * (cs - cb);
        dcs = -k_diff / e.dv_s() * (cs - cb) -
              sign * e.S_s() / (e.dv_s() * kFaraday * e.a * e.L * p.S) * I_net;
    };
    std::array<double, 4> d{};
    electrode(p.pos, s.cbar_b_pos, s.cbar_s_pos, +1.0, d[0], d[1]);
    electrode(p.neg, s.cbar_b_neg, s.cbar_s_neg, -1.0, d[2], d[3]);
    return d;
}

double spm_terminal_voltage(const SpmParams& p, const SpmState& s, double I) {
    double I_isc = 0.0;
    const double dU_sep = separator_potential(p, s, I, I_isc);
    const double I_net = I - I_isc;

    const double U_pos = poly_eval(p.pos.ocp, s.cbar_s_pos / p.pos.c_max);
    const double U_neg = poly_eval(p.neg.ocp, s.cbar_s_neg / p.neg.c_max);
    const double eta_pos = overpotential(p, p.pos, +1.0, I_net);
    const double eta_neg = overpotential(p, p.neg, -1.0, I_net);

    const double j_pos = I_net / (kFaraday * p.pos.a * p.pos.L * p.S);
    const double j_neg = -I_net / (kFaraday * p.neg.a * p.neg.L * p.S);
    const double film = kFaraday * (p.pos.R_f * j_pos - p.neg.R_f * j_neg);
    const double electrolyte = (p.pos.R_e - p.neg.R_e) * I;

    double v = U_pos - U_neg + eta_pos - eta_neg + film + electrolyte;
    if (p.g_sep > 0.0) v -= dU_sep;
    return v;
}

double total_lithium(const SpmParams& p, const SpmState& s) {
    return p.pos.dv_b() * s.cbar_b_pos + p.pos.dv_s() * s.cbar_s_pos +
           p.neg.dv_b() * s.cbar_b_neg + p.neg.dv_s() * s.cbar_s_neg;
}

SpmState spm_step(const SpmParams& p, const SpmState& s, double I, double dt) {
    auto add = [](const SpmState& base, const std::array<double, 4>& d, double h) {
        SpmState n = base;
        n.cbar_b_pos += h * d[0];
        n.cbar_s_pos += h * d[1];
        n.cbar_b_neg += h * d[2];
        n.cbar_s_neg += h * d[3];
        return n;
    };
    const auto k1 = cbar_derivatives(p, s, I);
    const auto k2 = cbar_derivatives(p, add(s, k1, dt / 2.0), I);
    const auto k3 = cbar_derivatives(p, add(s, k2, dt / 2.0), I);
    const auto k4 = cbar_derivatives(p, add(s, k3, dt), I);
    SpmState n = s;
    n.cbar_b_pos += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
    n.cbar_s_pos += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    n.cbar_b_neg += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
    n.cbar_s_neg += dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]);
    return n;
}

BattBeeParams reduce_to_battbee(const SpmParams& p, int ocv_order) {
    p.validate();
    const ElectrodeParams& e = p.neg; // normalization electrode

    // Shell concentration spans the stoichiometry window over v in [0,1].
    const double dC = (p.theta_neg_hi - p.theta_neg_lo) * e.c_max;
    const double charge_gain = e.S_s() / (kFaraday * e.a * e.L * p.S); // (mol/m^3 * m^3) per C, per dv

    BattBeeParams out;
    out.C_s = e.dv_s() * dC / charge_gain;
    out.C_b = e.dv_b() * dC / charge_gain;
    const double k_diff = 2.0 * e.D_s * e.S_b() / (e.dv_s() * e.r_s);
    out.R_b = 1.0 / (k_diff * out.C_s);

    const double r_eta =
        kGasConstant * p.T / (p.alpha_ct * kFaraday) *
        (1.0 / (2.0 * p.pos.i0 * p.pos.a * p.pos.L * p.S) +
         1.0 / (2.0 * p.neg.i0 * p.neg.a * p.neg.L * p.S));
    const double r_film = p.pos.R_f / (p.pos.a * p.pos.L * p.S) +
                          p.neg.R_f / (p.neg.a * p.neg.L * p.S);
    out.R_o = r_eta + r_film + p.pos.R_e - p.neg.R_e;

    // Least-squares polynomial fit of the full-cell OCV over the charge window.
    const int n = 401;
    Eigen::MatrixXd X(n, ocv_order + 1);
    Eigen::VectorXd y(n);
    for (int k = 0; k < n; ++k) {
        const double v = static_cast<double>(k) / (n - 1);
        const double th_pos = p.theta_pos_hi - v * (p.theta_pos_hi - p.theta_pos_lo);
        const double th_neg = p.theta_neg_lo + v * (p.theta_neg_hi - p.theta_neg_lo);
        y(k) = poly_eval(p.pos.ocp, th_pos) -
               poly_eval(p.neg.ocp, th_neg);
        double pw = 1.0;
        for (int j = 0; j <= ocv_order; ++j) {
            X(k, j) = pw;
            pw *= v;
        }
    }
    Eigen::VectorXd lambda = X.colPivHouseholderQr().solve(y);
    out.ocv = OcvPolynomial(std::vector<double>(lambda.data(), lambda.data() + lambda.size()));
    return out;
}

} // namespace battbee::spm
