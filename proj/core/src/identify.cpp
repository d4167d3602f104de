#include "battbee/identify.hpp"

#include "battbee/log.hpp"
#include "battbee/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace battbee::identify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

/// Invert a monotone OCV by bisection on [0,1], clamping out-of-range targets.
double invert_ocv(const OcvPolynomial& ocv, double target) {
    if (target <= ocv(0.0)) return 0.0;
    if (target >= ocv(1.0)) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ocv(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

void DataSet::validate() const {
    if (rows.empty()) throw std::invalid_argument("DataSet: empty");
    double prev = -kInf;
    for (const auto& r : rows) {
        if (!(r.t > prev)) throw std::invalid_argument("DataSet: time not strictly increasing");
        if (!std::isfinite(r.I) || !std::isfinite(r.V) || !std::isfinite(r.T_surf))
            throw std::invalid_argument("DataSet: non-finite sample");
        prev = r.t;
    }
    if (!(capacity_hint > 0.0)) throw std::invalid_argument("DataSet: capacity hint must be > 0");
}

std::size_t PwlOcv::segment_of(double v_s) const {
    if (segments.empty()) throw std::logic_error("PwlOcv: no segments");
    // Ties at interior breakpoints resolve to the lower segment.
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (v_s <= segments[i].v_hi) return i;
    return segments.size() - 1;
}

double PwlOcv::eval(double v_s) const {
    const PwlSegment& s = segments[segment_of(v_s)];
    return s.a * v_s + s.b;
}

double get_field(const BattBeeParams& p, const FaultInputs& f, Field fd) {
    switch (fd) {
        case Field::C_b: return p.C_b;
        case Field::C_s: return p.C_s;
        case Field::R_b: return p.R_b;
        case Field::R_o: return p.R_o;
        case Field::C_core: return p.C_core;
        case Field::C_surf: return p.C_surf;
        case Field::R_core: return p.R_core;
        case Field::R_surf0: return p.R_surf0;
        case Field::h_ec: return p.h_ec;
        case Field::alpha1: return p.alpha[0];
        case Field::alpha2: return p.alpha[1];
        case Field::alpha3: return p.alpha[2];
        case Field::alpha4: return p.alpha[3];
        case Field::T_onset: return p.T_onset;
        case Field::g_isc1: return f.g_isc1;
        case Field::g_isc2: return f.g_isc2;
    }
    throw std::logic_error("get_field: unknown field");
}

void set_field(BattBeeParams& p, FaultInputs& f, Field fd, double v) {
    switch (fd) {
        case Field::C_b: p.C_b = v; return;
        case Field::C_s: p.C_s = v; return;
        case Field::R_b: p.R_b = v; return;
        case Field::R_o: p.R_o = v; return;
        case Field::C_core: p.C_core = v; return;
        case Field::C_surf: p.C_surf = v; return;
        case Field::R_core: p.R_core = v; return;
        case Field::R_surf0: p.R_surf0 = v; return;
        case Field::h_ec: p.h_ec = v; return;
        case Field::alpha1: p.alpha[0] = v; return;
        case Field::alpha2: p.alpha[1] = v; return;
        case Field::alpha3: p.alpha[2] = v; return;
        case Field::alpha4: p.alpha[3] = v; return;
        case Field::T_onset: p.T_onset = v; return;
        case Field::g_isc1: f.g_isc1 = v; return;
        case Field::g_isc2: f.g_isc2 = v; return;
    }
}

std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                                const std::vector<double>& x0,
                                const std::vector<std::pair<double, double>>& bounds,
                                const FitOptions& opt,
                                std::size_t* iterations_out,
                                std::vector<double>* trace) {
    const std::size_t n = x0.size();
    if (bounds.size() != n) throw std::invalid_argument("nelder_mead: bounds size mismatch");

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    auto clipped = [&](std::vector<double> x) {
        for (std::size_t i = 0; i < n; ++i) x[i] = clip(x[i], bounds[i].first, bounds[i].second);
        return x;
    };

    std::vector<double> best = clipped(x0);
    double best_f = objective(best);
    std::size_t total_iters = 0;

    for (int restart = 0; restart <= opt.restarts; ++restart) {
        // Simplex around the current best; scale shrinks across restarts.
        const double scale = 0.10 / (1 << std::min(restart, 8));
        std::vector<std::vector<double>> simplex;
        std::vector<double> fvals;
        simplex.push_back(best);
        fvals.push_back(best_f);
        for (std::size_t i = 0; i < n; ++i) {
            auto v = best;
            const double span = bounds[i].second - bounds[i].first;
            double step = scale * (span > 0.0 && std::isfinite(span) ? span
                                                                     : std::max(std::abs(best[i]), 1.0));
            if (restart > 0) step *= 0.5 + 0.5 * std::abs(unit(rng));
            v[i] += step;
            v = clipped(v);
            if (v[i] == best[i]) v[i] = clip(best[i] - step, bounds[i].first, bounds[i].second);
            simplex.push_back(v);
            fvals.push_back(objective(v));
        }

        const int iters = opt.max_iterations / (opt.restarts + 1);
        for (int it = 0; it < iters; ++it) {
            ++total_iters;
            std::vector<std::size_t> idx(n + 1);
            for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(),
                      [&](std::size_t a, std::size_t b) { return fvals[a] < fvals[b]; });
            const std::size_t lo = idx[0], hi = idx[n], second_hi = idx[n - 1];
            if (trace) trace->push_back(fvals[lo]);
            if (std::abs(fvals[hi] - fvals[lo]) <=
                opt.tolerance * (std::abs(fvals[lo]) + opt.tolerance))
                break;

            std::vector<double> centroid(n, 0.0);
            for (std::size_t i = 0; i <= n; ++i) {
                if (i == hi) continue;
                for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;
            }

            auto blend = [&](double coeff) {
                std::vector<double> x(n);
                for (std::size_t j = 0; j < n; ++j)
                    x[j] = centroid[j] + coeff * (centroid[j] - simplex[hi][j]);
                return clipped(x);
            };

            const auto refl = blend(1.0);
            const double f_refl = objective(refl);
            if (f_refl < fvals[lo]) {
                const auto expa = blend(2.0);
                const double f_expa = objective(expa);
                if (f_expa < f_refl) {
                    simplex[hi] = expa;
                    fvals[hi] = f_expa;
                } else {
                    simplex[hi] = refl;
                    fvals[hi] = f_refl;
                }
            } else if (f_refl < fvals[second_hi]) {
                simplex[hi] = refl;
                fvals[hi] = f_refl;
            } else {
                const auto contr = blend(f_refl < fvals[hi] ? 0.5 : -0.5);
                const double f_contr = objective(contr);
                if (f_contr < std::min(f_refl, fvals[hi])) {
                    simplex[hi] = contr;
                    fvals[hi] = f_contr;
                } else {
                    for (std::size_t i = 0; i <= n; ++i) {
                        if (i == lo) continue;
                        for (std::size_t j = 0; j < n; ++j)
                            simplex[i][j] = simplex[lo][j] + 0.5 * (simplex[i][j] - simplex[lo][j]);
                        fvals[i] = objective(simplex[i]);
                    }
                }
            }
        }

        for (std::size_t i = 0; i <= n; ++i) {
            if (fvals[i] < best_f) {
                best_f = fvals[i];
                best = simplex[i];
            }
        }
    }

    if (iterations_out) *iterations_out = total_iters;
    return best;
}

OcvPolynomial fit_ocv(const DataSet& data, int order) {
    data.validate();
    const double rate_limit = data.capacity_hint / (20.0 * 3600.0); // C/20 in amps
    for (const auto& r : data.rows)
        if (std::abs(r.I) > rate_limit)
            throw std::invalid_argument("fit_ocv: data is not low-rate (|I| above C/20)");

    // Coulomb-counted normalized SoC.
    std::vector<double> x(data.rows.size());
    x[0] = data.soc0;
    for (std::size_t k = 1; k < data.rows.size(); ++k) {
        const auto& a = data.rows[k - 1];
        const auto& b = data.rows[k];
        x[k] = x[k - 1] + 0.5 * (a.I + b.I) * (b.t - a.t) / data.capacity_hint;
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    if (*mx - *mn < 0.8)
        throw std::invalid_argument("fit_ocv: SoC coverage below 80% of [0,1]");

    for (int N = order; N >= 0; --N) {
        Eigen::MatrixXd X(data.rows.size(), N + 1);
        Eigen::VectorXd y(data.rows.size());
        for (std::size_t k = 0; k < data.rows.size(); ++k) {
            y(static_cast<Eigen::Index>(k)) = data.rows[k].V;
            double pw = 1.0;
            for (int j = 0; j <= N; ++j) {
                X(static_cast<Eigen::Index>(k), j) = pw;
                pw *= x[k];
            }
        }
        Eigen::VectorXd lambda = X.colPivHouseholderQr().solve(y);
        std::vector<double> coeffs(lambda.data(), lambda.data() + lambda.size());
        if (OcvPolynomial::is_monotone(coeffs)) return OcvPolynomial(std::move(coeffs));
        log::info("fit_ocv: order " + std::to_string(N) + " fit non-monotone, retrying lower order");
    }
    throw std::runtime_error("fit_ocv: no monotone fit found down to order 1");
}

namespace {

struct SimErrors {
    double rmse_v;
    double rmse_T;
};

/// RMSE of simulated outputs against one dataset. The initial electrical state
/// assumes rest at the first sample; thermal state starts at the measured
/// surface temperature. Throws only on invalid configuration; integration
/// failures surface as infinite error.
SimErrors simulate_errors(const BattBeeParams& p, const FaultInputs& f,
                          const DataSet& data, double sim_dt) {
    const double t0 = data.rows.front().t;
    const double t_end = data.rows.back().t - t0;
    Scenario sc;
    const double dt_max = std::min(p.R_b * p.C_s, p.R_core * p.C_surf) / 20.0;
    double row_dt = data.rows.size() > 1 ? data.rows[1].t - data.rows[0].t : dt_max;
    if (sim_dt > 0.0) {
        sc.dt = sim_dt;
    } else {
        const int split = std::max(1, static_cast<int>(std::ceil(row_dt / dt_max)));
        sc.dt = row_dt / split;
    }
    sc.t_end = t_end;
    sc.T_amb = data.T_amb;
    sc.interp = CurrentInterp::hold;
    sc.current.reserve(data.rows.size());
    for (const auto& r : data.rows) sc.current.push_back({r.t - t0, r.I});
    if (f.g_isc1 != 0.0 || f.g_isc2 != 0.0) sc.faults.push_back({0.0, f.g_isc1, f.g_isc2});

    sc.initial.V_s = sc.initial.V_b =
        invert_ocv(p.ocv, data.rows.front().V - data.rows.front().I * p.R_o);
    sc.initial.T_core = sc.initial.T_surf = data.rows.front().T_surf;

    const Trajectory tr = run_scenario(p, sc);
    double se_v = 0.0, se_T = 0.0;
    std::size_t n = 0;
    for (const auto& r : data.rows) {
        const auto k = static_cast<std::size_t>(std::llround((r.t - t0) / sc.dt));
        if (k >= tr.rows.size()) break;
        const double ev = tr.rows[k].V - r.V;
        const double eT = tr.rows[k].T_surf - r.T_surf;
        se_v += ev * ev;
        se_T += eT * eT;
        ++n;
    }
    if (n == 0) return {kInf, kInf};
    return {std::sqrt(se_v / n), std::sqrt(se_T / n)};
}

FitReport fit_with_bounds(const std::vector<DataSet>& data, const BattBeeParams& init,
                          const FaultInputs& init_faults,
                          const std::vector<FieldBound>& bounds, const FitOptions& opt) {
    if (data.empty()) throw std::invalid_argument("fit: need at least one dataset");
    for (const auto& d : data) d.validate();

    std::vector<FieldBound> free_fields;
    BattBeeParams base = init;
    FaultInputs base_faults = init_faults;
    for (const auto& b : bounds) {
        if (!(b.lo > 0.0) && b.field != Field::g_isc1 && b.field != Field::g_isc2 &&
            b.field != Field::h_ec)
            throw std::invalid_argument("fit: bounds must be positive");
        if (!(b.lo <= b.hi) || !std::isfinite(b.hi))
            throw std::invalid_argument("fit: bounds must be finite with lo <= hi");
        if (b.lo == b.hi) {
            set_field(base, base_faults, b.field, b.lo);
        } else {
            free_fields.push_back(b);
        }
    }

    auto make_candidate = [&](const std::vector<double>& z, BattBeeParams& p, FaultInputs& f) {
        p = base;
        f = base_faults;
        for (std::size_t i = 0; i < free_fields.size(); ++i)
            set_field(p, f, free_fields[i].field, std::exp(z[i]));
    };

    auto objective = [&](const std::vector<double>& z) {
        BattBeeParams p;
        FaultInputs f;
        make_candidate(z, p, f);
        double total = 0.0;
        try {
            for (const auto& d : data) {
                const SimErrors e = simulate_errors(p, f, d, opt.sim_dt);
                total += opt.w_V * e.rmse_v + opt.w_T * e.rmse_T;
            }
        } catch (const std::exception& e) {
            log::debug(std::string("fit objective: candidate rejected: ") + e.what());
            return kInf;
        }
        return std::isfinite(total) ? total : kInf;
    };

    // Log-scaled coordinates; zero lower bounds get a tiny positive floor.
    std::vector<double> z0(free_fields.size());
    std::vector<std::pair<double, double>> zb(free_fields.size());
    for (std::size_t i = 0; i < free_fields.size(); ++i) {
        const double lo = std::max(free_fields[i].lo, 1e-12);
        const double hi = free_fields[i].hi;
        const double v0 = clip(get_field(init, init_faults, free_fields[i].field), lo, hi);
        z0[i] = std::log(v0);
        zb[i] = {std::log(lo), std::log(hi)};
    }

    FitReport report;
    std::size_t iters = 0;
    const auto z_best = free_fields.empty()
                            ? z0
                            : nelder_mead(objective, z0, zb, opt, &iters, &report.objective_trace);
    report.iterations = iters;
    make_candidate(z_best, report.params, report.faults);

    double se_v = 0.0, se_T = 0.0;
    std::size_t n_sets = 0;
    for (const auto& d : data) {
        const SimErrors e = simulate_errors(report.params, report.faults, d, opt.sim_dt);
        se_v += e.rmse_v;
        se_T += e.rmse_T;
        ++n_sets;
    }
    report.rmse_v = se_v / n_sets;
    report.rmse_T = se_T / n_sets;
    return report;
}

} // namespace

FitReport fit_parameters(const std::vector<DataSet>& data, const BattBeeParams& init,
                         const std::vector<FieldBound>& bounds, const FitOptions& opt) {
    return fit_with_bounds(data, init, FaultInputs{}, bounds, opt);
}

FitReport fit_fault_parameters(const DataSet& data, const BattBeeParams& base,
                               const std::vector<FieldBound>& bounds, const FitOptions& opt) {
    if (!data.fault_window)
        throw std::invalid_argument("fit_fault_parameters: dataset has no labeled fault window");
    for (const auto& b : bounds)
        switch (b.field) {
            case Field::g_isc1:
            case Field::g_isc2:
            case Field::h_ec:
            case Field::alpha1:
            case Field::alpha2:
            case Field::alpha3:
            case Field::alpha4:
            case Field::T_onset:
                break;
            default:
                throw std::invalid_argument("fit_fault_parameters: only ISC/TR fields may be fitted");
        }

    DataSet window = data;
    window.rows.clear();
    for (const auto& r : data.rows)
        if (r.t >= data.fault_window->first && r.t <= data.fault_window->second)
            window.rows.push_back(r);
    if (window.rows.size() < 2)
        throw std::invalid_argument("fit_fault_parameters: fault window contains too few samples");

    return fit_with_bounds({window}, base, FaultInputs{}, bounds, opt);
}

namespace {

double chord_error(const OcvPolynomial& ocv, double v0, double v1, int probes = 1025) {
    const double u0 = ocv(v0), u1 = ocv(v1);
    const double a = (u1 - u0) / (v1 - v0);
    double worst = 0.0;
    for (int k = 0; k <= probes; ++k) {
        const double v = v0 + (v1 - v0) * k / probes;
        worst = std::max(worst, std::abs(ocv(v) - (u0 + a * (v - v0))));
    }
    return worst;
}

} // namespace

PwlOcv piecewise_linearize(const OcvPolynomial& ocv, double tolerance,
                           std::size_t max_segments) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("piecewise_linearize: tolerance must be > 0");

    // probe-grid max slightly underestimates the true sup; keep a margin so
    // the stated tolerance holds on any dense verification grid
    const double budget = tolerance * (1.0 - 1e-4);

    PwlOcv out;
    double v0 = 0.0;
    while (v0 < 1.0) {
        double v1 = 1.0;
        if (chord_error(ocv, v0, v1) > budget) {
            // Largest admissible endpoint by bisection.
            double lo = v0, hi = 1.0;
            for (int it = 0; it < 48; ++it) {
                const double mid = 0.5 * (lo + hi);
                (chord_error(ocv, v0, mid) <= budget ? lo : hi) = mid;
            }
            v1 = lo;
            if (!(v1 > v0))
                throw std::runtime_error("piecewise_linearize: tolerance unachievable");
        }
        const double a = (ocv(v1) - ocv(v0)) / (v1 - v0);
        out.segments.push_back({v0, v1, a, ocv(v0) - a * v0});
        if (out.segments.size() > max_segments)
            throw std::runtime_error("piecewise_linearize: tolerance needs more than " +
                                     std::to_string(max_segments) + " segments");
        v0 = v1;
    }
    out.segments.back().v_hi = 1.0;

    // Global slope bounds of U itself (dense derivative scan), widened by the
    // chord slopes so both the nonlinear and the per-segment paths are covered.
    double lo = kInf, hi = -kInf;
    constexpr int n = 10000;
    for (int k = 0; k <= n; ++k) {
        const double d = ocv.slope(static_cast<double>(k) / n);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    for (const auto& s : out.segments) {
        lo = std::min(lo, s.a);
        hi = std::max(hi, s.a);
    }
    out.psi_min = lo;
    out.psi_max = hi;
    return out;
}

PwlOcv piecewise_linearize_segments(const OcvPolynomial& ocv, std::size_t m) {
    if (m == 0) throw std::invalid_argument("piecewise_linearize_segments: m must be >= 1");
    double tol_hi = chord_error(ocv, 0.0, 1.0) + 1e-12; // one segment suffices
    double tol_lo = tol_hi * 1e-9;
    PwlOcv best = piecewise_linearize(ocv, tol_hi, m);
    for (int it = 0; it < 60; ++it) {
        const double tol = 0.5 * (tol_lo + tol_hi);
        try {
            PwlOcv cand = piecewise_linearize(ocv, tol, m);
            best = std::move(cand);
            tol_hi = tol;
            if (best.segments.size() == m) break;
        } catch (const std::runtime_error&) {
            tol_lo = tol;
        }
    }
    return best;
}

} // namespace battbee::identify
