#include "battbee/params.hpp"

#include <cmath>
#include <limits>

namespace battbee {

namespace {

double horner(const std::vector<double>& lambda, double x) {
    double acc = 0.0;
    for (auto it = lambda.rbegin(); it != lambda.rend(); ++it) acc = acc * x + *it;
    return acc;
}

} // namespace

OcvPolynomial::OcvPolynomial(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    if (lambda_.empty()) throw std::invalid_argument("OcvPolynomial: empty coefficient vector");
    for (double c : lambda_) {
        if (!std::isfinite(c)) throw std::invalid_argument("OcvPolynomial: non-finite coefficient");
    }
    if (!is_monotone(lambda_))
        throw std::invalid_argument("OcvPolynomial: U(V_s) not monotone nondecreasing on [0,1]");
}

double OcvPolynomial::operator()(double v_s) const { return horner(lambda_, v_s); }

double OcvPolynomial::slope(double v_s) const {
    double acc = 0.0;
    for (std::size_t i = lambda_.size(); i-- > 1;)
        acc = acc * v_s + static_cast<double>(i) * lambda_[i];
    return acc;
}

bool OcvPolynomial::is_monotone(const std::vector<double>& lambda, int grid) {
    double prev = horner(lambda, 0.0);
    for (int k = 1; k < grid; ++k) {
        const double v = static_cast<double>(k) / (grid - 1);
        const double u = horner(lambda, v);
        if (u < prev - 1e-12) return false;
        prev = u;
    }
    return true;
}

void BattBeeParams::validate(double T_amb_ref) const {
    auto require_pos = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument(std::string("BattBeeParams: ") + name +
                                        " must be strictly positive and finite");
    };
    require_pos(C_b, "C_b");
    require_pos(C_s, "C_s");
    require_pos(R_b, "R_b");
    require_pos(R_o, "R_o");
    require_pos(C_core, "C_core");
    require_pos(C_surf, "C_surf");
    require_pos(R_core, "R_core");
    require_pos(R_surf0, "R_surf0");
    require_pos(r_surf_min_frac, "r_surf_min_frac");
    require_pos(q_decomp_max, "q_decomp_max");

    if (T_peak <= T_onset)
        throw std::invalid_argument("BattBeeParams: T_peak must exceed T_onset");

    const double span = beta * (T_peak - T_amb_ref);
    if (!(span > 0.0) || !(span < 1.0))
        throw std::invalid_argument(
            "BattBeeParams: beta*(T_peak - T_amb) must lie in (0,1) so R_surf stays positive");

    if (h_ec < 0.0 || !std::isfinite(h_ec))
        throw std::invalid_argument("BattBeeParams: h_ec must be finite and nonnegative");

    if (alpha[0] < 0.0 || alpha[2] <= 0.0)
        throw std::invalid_argument("BattBeeParams: need alpha1 >= 0 and alpha3 > 0");

    // Numeric sweep: the decomposition term must stay finite and nonnegative
    // over the whole simulated temperature range.
    constexpr int n = 512;
    for (int k = 0; k <= n; ++k) {
        const double T = T_amb_ref + (T_peak - T_amb_ref) * k / n;
        const double dT = T - T_onset;
        const double log_num = std::log(std::max(alpha[0], std::numeric_limits<double>::min())) +
                               alpha[1] * dT;
        const double log_den = std::log1p(alpha[2] * std::exp(std::min(alpha[3] * dT, 700.0)));
        const double q = std::exp(std::min(log_num - log_den, 709.0));
        if (!std::isfinite(q) || q < 0.0)
            throw std::invalid_argument("BattBeeParams: alpha values give non-finite Q_decomp");
    }
}

} // namespace battbee
