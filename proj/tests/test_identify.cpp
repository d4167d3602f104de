#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "battbee/identify.hpp"
#include "battbee/sim.hpp"

#include <cmath>

using namespace battbee;
using namespace battbee::identify;

namespace {

// Low-rate discharge sampled from a known open-circuit polynomial; the
// Coulomb-counted state of charge is exact for constant current.
DataSet low_rate_sweep(const OcvPolynomial& u, double cap, double hours_rate = 25.0) {
    DataSet d;
    d.capacity_hint = cap;
    d.soc0 = 1.0;
    const double I = -cap / (hours_rate * 3600.0);
    const double t_end = 0.95 * cap / std::abs(I);
    for (double t = 0.0; t <= t_end; t += t_end / 900.0) {
        const double soc = 1.0 + I * t / cap;
        d.rows.push_back({t, I, u(soc), 298.15});
    }
    return d;
}

DataSet sample_run(const BattBeeParams& p, const Scenario& sc, double row_dt) {
    const Trajectory tr = run_scenario(p, sc);
    DataSet d;
    d.capacity_hint = p.capacity();
    const auto stride = static_cast<std::size_t>(std::llround(row_dt / sc.dt));
    DataSet out = d;
    for (std::size_t k = 0; k < tr.rows.size(); k += stride)
        out.rows.push_back({tr.rows[k].t, tr.rows[k].I, tr.rows[k].V, tr.rows[k].T_surf});
    return out;
}

} // namespace

TEST_CASE("open-circuit curve fitting") {
    SUBCASE("noise-free synthetic data recovers the generating coefficients") {
        const std::vector<double> truth{3.1, 0.9, -0.6, 0.5};
        const OcvPolynomial u(truth);
        const DataSet d = low_rate_sweep(u, 85016.659);
        const OcvPolynomial fit = fit_ocv(d, 3);
        REQUIRE(fit.coefficients().size() == truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i)
            CHECK(fit.coefficients()[i] == doctest::Approx(truth[i]).epsilon(1e-8));
    }

    SUBCASE("constant voltage fits exactly at order zero") {
        DataSet d;
        for (int k = 0; k <= 900; ++k)
            d.rows.push_back({double(k) * 100.0, -85016.659 / (25.0 * 3600.0), 3.6, 298.15});
        const OcvPolynomial fit = fit_ocv(d, 0);
        CHECK(fit.order() == 0);
        CHECK(fit(0.5) == doctest::Approx(3.6).epsilon(1e-12));
    }

    SUBCASE("high-rate data is rejected") {
        DataSet d = low_rate_sweep(OcvPolynomial({3.0, 1.0}), 85016.659);
        d.rows[4].I = -85016.659 / 3600.0; // 1C sample sneaks in
        CHECK_THROWS(fit_ocv(d, 3));
    }

    SUBCASE("narrow sweep fails the coverage gate") {
        DataSet d = low_rate_sweep(OcvPolynomial({3.0, 1.0}), 85016.659);
        d.rows.resize(d.rows.size() / 3); // covers ~30% of the range
        CHECK_THROWS(fit_ocv(d, 3));
    }
}

TEST_CASE("piecewise linearization") {
    SUBCASE("an affine curve is one exact segment") {
        const PwlOcv pwl = piecewise_linearize(OcvPolynomial({3.0, 1.2}), 0.01);
        REQUIRE(pwl.segments.size() == 1);
        CHECK(pwl.segments[0].a == doctest::Approx(1.2).epsilon(1e-9));
        CHECK(pwl.psi_min == doctest::Approx(1.2).epsilon(1e-9));
        CHECK(pwl.psi_max == doctest::Approx(1.2).epsilon(1e-9));
    }

    SUBCASE("quadratic curve meets the error budget on a dense grid") {
        const OcvPolynomial u({3.0, 0.0, 1.0}); // 3 + v^2
        const PwlOcv pwl = piecewise_linearize(u, 0.01);
        double worst = 0.0;
        for (int k = 0; k <= 10000; ++k) {
            const double v = double(k) / 10000.0;
            worst = std::max(worst, std::abs(u(v) - pwl.eval(v)));
            CHECK(u.slope(v) >= pwl.psi_min - 1e-12);
            CHECK(u.slope(v) <= pwl.psi_max + 1e-12);
        }
        CHECK(worst <= 0.01);
    }

    SUBCASE("segments partition the domain continuously") {
        const PwlOcv pwl = piecewise_linearize(OcvPolynomial({3.0, 0.5, 0.4, 0.3}), 0.002);
        CHECK(pwl.segments.front().v_lo == 0.0);
        CHECK(pwl.segments.back().v_hi == 1.0);
        for (std::size_t i = 1; i < pwl.segments.size(); ++i) {
            const auto& a = pwl.segments[i - 1];
            const auto& b = pwl.segments[i];
            CHECK(a.v_hi == b.v_lo);
            CHECK(a.a * a.v_hi + a.b == doctest::Approx(b.a * b.v_lo + b.b).epsilon(1e-9));
        }
    }

    SUBCASE("fixed segment count") {
        const PwlOcv pwl = piecewise_linearize_segments(OcvPolynomial({3.0, 0.0, 1.0}), 6);
        CHECK(pwl.segments.size() == 6);
    }

    SUBCASE("unachievable tolerance is reported") {
        CHECK_THROWS(piecewise_linearize(OcvPolynomial({3.0, 0.0, 1.0}), 1e-9, 8));
    }
}

TEST_CASE("optimizer determinism") {
    auto sphere = [](const std::vector<double>& z) {
        double s = 0.0;
        for (double v : z) s += (v - 0.7) * (v - 0.7);
        return s;
    };
    FitOptions opt;
    opt.seed = 42;
    const std::vector<double> x0{0.0, 0.0};
    const std::vector<std::pair<double, double>> bounds{{-2.0, 2.0}, {-2.0, 2.0}};
    const auto a = nelder_mead(sphere, x0, bounds, opt);
    const auto b = nelder_mead(sphere, x0, bounds, opt);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(a[0] == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("resistance round trip from pulse data") {
    BattBeeParams truth;
    truth.ocv = OcvPolynomial({3.0, 1.2});

    Scenario sc;
    sc.dt = 1.0 / 6.0;
    sc.t_end = 400.0;
    sc.initial.V_b = sc.initial.V_s = 0.8;
    sc.current = {{0.0, 0.0}, {30.0, -20.0}, {150.0, 0.0}, {250.0, 15.0}, {350.0, 0.0}};
    const DataSet data = sample_run(truth, sc, 1.0);

    BattBeeParams init = truth;
    init.R_b *= 1.2;
    init.R_o *= 0.8;
    std::vector<FieldBound> bounds{{Field::R_b, truth.R_b / 3.0, truth.R_b * 3.0},
                                   {Field::R_o, truth.R_o / 3.0, truth.R_o * 3.0}};
    FitOptions opt;
    opt.seed = 1;
    opt.restarts = 2;
    opt.max_iterations = 400;
    const FitReport rep = fit_parameters({data}, init, bounds, opt);
    CHECK(rep.params.R_b == doctest::Approx(truth.R_b).epsilon(0.02));
    CHECK(rep.params.R_o == doctest::Approx(truth.R_o).epsilon(0.02));
    CHECK(rep.rmse_v <= 1e-3);

    SUBCASE("temperature weight zero leaves thermal fields untouched") {
        CHECK(rep.params.C_core == init.C_core);
        CHECK(rep.params.R_core == init.R_core);
    }
}

TEST_CASE("fault-window fitting") {
    BattBeeParams base;
    base.ocv = OcvPolynomial({3.0, 1.2});

    SUBCASE("a fault-free window yields a negligible conductance") {
        Scenario sc;
        sc.dt = 1.0 / 6.0;
        sc.t_end = 200.0;
        sc.initial.V_b = sc.initial.V_s = 0.8;
        sc.current = {{0.0, 0.0}, {50.0, -10.0}, {150.0, 0.0}};
        DataSet data = sample_run(base, sc, 1.0);
        data.fault_window = {{0.0, 200.0}};

        FitOptions opt;
        opt.seed = 3;
        opt.restarts = 1;
        opt.max_iterations = 300;
        const FitReport rep =
            fit_fault_parameters(data, base, {{Field::g_isc1, 0.0, 1.0}}, opt);
        CHECK(rep.faults.g_isc1 <= 1e-6);
    }

    SUBCASE("missing window label is a precondition error") {
        DataSet data;
        data.rows = {{0.0, 0.0, 3.9, 298.15}, {1.0, 0.0, 3.9, 298.15}};
        CHECK_THROWS(fit_fault_parameters(data, base, {{Field::g_isc1, 0.0, 1.0}}, {}));
    }

    SUBCASE("non-fault fields are rejected") {
        DataSet data;
        data.rows = {{0.0, 0.0, 3.9, 298.15}, {1.0, 0.0, 3.9, 298.15}};
        data.fault_window = {{0.0, 1.0}};
        CHECK_THROWS(fit_fault_parameters(data, base, {{Field::R_b, 1e-4, 1e-2}}, {}));
    }
}
