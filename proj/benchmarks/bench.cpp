#include "battbee/detect.hpp"
#include "battbee/identify.hpp"
#include "battbee/sim.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace battbee;

BattBeeParams bench_params() {
    BattBeeParams p;
    p.ocv = OcvPolynomial({3.0, 1.2, -0.9, 0.8});
    return p;
}

void BM_IntegrateStep(benchmark::State& state) {
    const BattBeeParams p = bench_params();
    SimState s;
    s.V_b = s.V_s = 0.8;
    for (auto _ : state) {
        s = integrate_step(p, FaultInputs{}, s, -10.0, 298.15, 0.1);
        benchmark::DoNotOptimize(s);
        s.V_b = s.V_s = 0.8; // keep the operating point fixed
    }
}
BENCHMARK(BM_IntegrateStep);

void BM_ScenarioMinute(benchmark::State& state) {
    const BattBeeParams p = bench_params();
    Scenario sc;
    sc.dt = 0.1;
    sc.t_end = 60.0;
    sc.initial.V_b = sc.initial.V_s = 0.8;
    sc.current = {{0.0, -20.0}};
    for (auto _ : state) {
        const Trajectory tr = run_scenario(p, sc);
        benchmark::DoNotOptimize(tr.rows.back());
    }
}
BENCHMARK(BM_ScenarioMinute);

void BM_DetectorStep(benchmark::State& state) {
    const BattBeeParams p = bench_params();
    detect::Detector::Config cfg;
    cfg.delta = 0.15;
    detect::Detector det(p, identify::piecewise_linearize(p.ocv, 0.01), cfg);
    det.reset(detect::Vec4(0.8, 0.8, 298.15, 298.15));
    double t = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(det.step(t, -10.0, 3.7, 298.8, 298.15, 1.0));
        t += 1.0;
    }
}
BENCHMARK(BM_DetectorStep);

void BM_DetectorSynthesis(benchmark::State& state) {
    const BattBeeParams p = bench_params();
    const auto pwl = identify::piecewise_linearize(p.ocv, 0.01);
    detect::Detector::Config cfg;
    cfg.delta = 0.15;
    for (auto _ : state) {
        detect::Detector det(p, pwl, cfg);
        benchmark::DoNotOptimize(det.thresholds());
    }
}
BENCHMARK(BM_DetectorSynthesis);

} // namespace

BENCHMARK_MAIN();
