#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "battbee/spm.hpp"

#include <cmath>

using namespace battbee;
using namespace battbee::spm;

namespace {

SpmParams synthetic_cell() {
    SpmParams p;
    p.neg.ocp = {0.6, -0.5, 0.1}; // decreasing in stoichiometry
    p.pos.ocp = {4.4, -1.0};
    p.validate();
    return p;
}

} // namespace

TEST_CASE("separator short-circuit current") {
    SpmParams p = synthetic_cell();
    const SpmState s = equilibrium_state(p, 0.8);

    SUBCASE("no separator path means zero current") {
        CHECK(spm_isc_current(p, s, -10.0) == 0.0);
    }

    SUBCASE("Ohm's law at negligible overpotential") {
        SpmParams flat = p;
        flat.pos.ocp = {4.0};
        flat.neg.ocp = {0.3};
        flat.pos.i0 = flat.neg.i0 = 1e8; // kinetics practically ideal
        flat.g_sep = 10.0;               // R = 0.1 ohm
        CHECK(spm_isc_current(flat, equilibrium_state(flat, 0.5), 0.0) ==
              doctest::Approx(37.0).epsilon(1e-4));
    }

    SUBCASE("strictly increasing in the separator conductance") {
        double prev = 0.0;
        for (double g : {0.01, 0.1, 0.5, 1.0, 2.0}) {
            SpmParams q = p;
            q.g_sep = g;
            const double i = spm_isc_current(q, s, 0.0);
            CHECK(i > prev);
            prev = i;
        }
    }
}

TEST_CASE("concentration dynamics") {
    SpmParams p = synthetic_cell();

    SUBCASE("equilibrium with no current is stationary") {
        const auto d = cbar_derivatives(p, equilibrium_state(p, 0.5), 0.0);
        for (double v : d) CHECK(v == 0.0);
    }

    SUBCASE("interior exchange telescopes out of the per-electrode totals") {
        SpmState s = equilibrium_state(p, 0.6);
        s.cbar_s_pos += 500.0; // force an interior gradient
        s.cbar_b_neg -= 300.0;
        const double I = -7.5;
        const auto d = cbar_derivatives(p, s, I);
        const double pos_total = p.pos.dv_b() * d[0] + p.pos.dv_s() * d[1];
        const double neg_total = p.neg.dv_b() * d[2] + p.neg.dv_s() * d[3];
        const double flux = p.pos.S_s() / (kFaraday * p.pos.a * p.pos.L * p.S) * I;
        CHECK(pos_total == doctest::Approx(-flux).epsilon(1e-12));
        CHECK(neg_total == doctest::Approx(flux).epsilon(1e-12));
    }

    SUBCASE("lithium is conserved under a separator short at rest") {
        SpmParams q = synthetic_cell();
        q.g_sep = 0.5;
        SpmState s = equilibrium_state(q, 0.9);
        const double li0 = total_lithium(q, s);
        for (int k = 0; k < 10000; ++k) s = spm_step(q, s, 0.0, 0.5);
        CHECK(std::abs(total_lithium(q, s) - li0) / li0 <= 1e-10);
    }

    SUBCASE("a separator short drains the usable charge monotonically") {
        SpmParams q = synthetic_cell();
        q.g_sep = 0.5;
        SpmState s = equilibrium_state(q, 0.9);
        double prev = s.cbar_s_neg;
        for (int k = 0; k < 200; ++k) {
            for (int j = 0; j < 50; ++j) s = spm_step(q, s, 0.0, 0.5);
            CHECK(s.cbar_s_neg <= prev + 1e-9);
            prev = s.cbar_s_neg;
        }
    }
}

TEST_CASE("terminal voltage") {
    SpmParams p = synthetic_cell();
    const SpmState s = equilibrium_state(p, 0.7);

    SUBCASE("rest voltage is the open-circuit difference") {
        const double th_pos = s.cbar_s_pos / p.pos.c_max;
        const double th_neg = s.cbar_s_neg / p.neg.c_max;
        const double u = (4.4 - 1.0 * th_pos) -
                         (0.6 - 0.5 * th_neg + 0.1 * th_neg * th_neg);
        CHECK(spm_terminal_voltage(p, s, 0.0) == doctest::Approx(u).epsilon(1e-12));
    }

    SUBCASE("discharge pulls the voltage below open circuit") {
        CHECK(spm_terminal_voltage(p, s, -15.0) < spm_terminal_voltage(p, s, 0.0));
    }

    SUBCASE("reaction overpotential linearizes with bounded remainder") {
        // At |arg| <= 0.1, asinh deviates from its tangent by <= x^2/6 relative.
        const double denom = 2.0 * p.pos.i0 * p.pos.a * p.pos.L * p.S;
        const double slope = kGasConstant * p.T / (p.alpha_ct * kFaraday) / denom;
        for (double frac : {0.02, 0.05, 0.1}) {
            const double I = frac * denom;
            const double eta = overpotential(p, p.pos, +1.0, I);
            CHECK(std::abs(eta - slope * I) <= 0.0017 * std::abs(eta));
        }
    }
}

TEST_CASE("reduction to the equivalent circuit") {
    SpmParams p = synthetic_cell();

    SUBCASE("diffusion coefficient sets the bulk resistance") {
        SpmParams fast = p;
        fast.neg.D_s *= 2.0;
        const auto a = reduce_to_battbee(p);
        const auto b = reduce_to_battbee(fast);
        CHECK(b.R_b == doctest::Approx(a.R_b / 2.0).epsilon(1e-12));
    }

    SUBCASE("inner-element volume sets the bulk capacitance") {
        SpmParams small = p, big = p;
        small.neg.r_b = p.neg.r_s * std::cbrt(0.25);
        big.neg.r_b = p.neg.r_s * std::cbrt(0.5);
        const auto a = reduce_to_battbee(small);
        const auto b = reduce_to_battbee(big);
        CHECK(b.C_b == doctest::Approx(2.0 * a.C_b).epsilon(1e-12));
    }

    SUBCASE("mapped open-circuit curve matches the electrode difference") {
        const auto bp = reduce_to_battbee(p);
        for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const SpmState s = equilibrium_state(p, v);
            CHECK(bp.ocv(v) ==
                  doctest::Approx(spm_terminal_voltage(p, s, 0.0)).epsilon(1e-9));
        }
    }
}
