// battbee: batch CLI around the cell model, identification, and detection
// library. Exit codes: 0 success / no alarm, 2 parse or usage error,
// 3 numeric failure, 4 detectability failure, 10 alarm raised.

#include "battbee/detect.hpp"
#include "battbee/identify.hpp"
#include "battbee/io.hpp"
#include "battbee/log.hpp"
#include "battbee/model.hpp"
#include "battbee/sim.hpp"
#include "battbee/spm.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitDetectability = 4;
constexpr int kExitAlarm = 10;

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%FT%TZ", &tm);
    return buf;
}

void emit_report(battbee::io::RunReport& rep, const std::string& out_path) {
    rep.timestamp = now_iso8601();
    battbee::io::write_text_file(out_path, rep.to_text());
}

/// Inverts the OCV polynomial by bisection; target clamped to the range.
double invert_ocv(const battbee::OcvPolynomial& ocv, double target) {
    double lo = 0.0, hi = 1.0;
    if (target <= ocv(lo)) return lo;
    if (target >= ocv(hi)) return hi;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (ocv(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<double> dt;
    std::optional<double> eta;
    std::optional<double> inflation;
    std::uint64_t seed = 0;
};

battbee::io::ScenarioDoc load_doc(const CommonFlags& fl) {
    auto doc = battbee::io::load_scenario_file(fl.config);
    if (fl.dt) doc.scenario.dt = *fl.dt;
    if (fl.eta) doc.detector.eta = *fl.eta;
    if (fl.inflation) doc.detector.inflation = *fl.inflation;
    return doc;
}

battbee::detect::Detector make_detector(const battbee::io::ScenarioDoc& doc) {
    using namespace battbee;
    const auto pwl = identify::piecewise_linearize(doc.params.ocv, doc.detector.pwl_tol);
    detect::Detector::Config cfg;
    cfg.Q_proc = detect::Vec4(doc.detector.q_proc[0], doc.detector.q_proc[1],
                              doc.detector.q_proc[2], doc.detector.q_proc[3])
                     .asDiagonal();
    cfg.R_meas = detect::Vec2(doc.detector.r_meas[0], doc.detector.r_meas[1]).asDiagonal();
    cfg.delta = doc.detector.delta_norm();
    cfg.eta = doc.detector.eta;
    cfg.eta_period = doc.detector.eta_period;
    cfg.inflation = doc.detector.inflation;
    return detect::Detector(doc.params, pwl, cfg);
}

int run_simulate(const CommonFlags& fl, const std::string& report_path) {
    using namespace battbee;
    const auto doc = load_doc(fl);
    const Trajectory tr = run_scenario(doc.params, doc.scenario);
    io::write_trajectory_csv(tr, fl.out);

    io::RunReport rep;
    rep.command = "simulate";
    rep.inputs.emplace_back("config", io::content_digest(io::read_text_file(fl.config)));
    rep.fields.emplace_back("rows", std::to_string(tr.rows.size()));
    rep.fields.emplace_back("dt_s", io::format_sig9(doc.scenario.dt));
    rep.fields.emplace_back("t_end_s", io::format_sig9(doc.scenario.t_end));
    rep.fields.emplace_back("final_soc_pct", io::format_sig9(tr.rows.back().soc));
    rep.fields.emplace_back("final_temp_core_K", io::format_sig9(tr.rows.back().T_core));
    emit_report(rep, report_path);
    return kExitOk;
}

int run_detect(const CommonFlags& fl, const std::string& data_path,
               const std::string& report_path) {
    using namespace battbee;
    const auto doc = load_doc(fl);

    identify::DataSet data;
    if (!data_path.empty()) {
        data = io::read_telemetry_csv(data_path);
        if (!doc.has_detector)
            log::info("no [detector] section in config; using defaults");
        data.T_amb = doc.scenario.T_amb;
    } else {
        // No telemetry given: synthesize it from the scenario at sample_dt.
        const Trajectory tr = run_scenario(doc.params, doc.scenario);
        const double stride_t = doc.detector.sample_dt;
        double next = 0.0;
        for (const auto& r : tr.rows) {
            if (r.t + 1e-9 < next) continue;
            data.rows.push_back({r.t, r.I, r.V, r.T_surf});
            next = r.t + stride_t;
        }
        data.T_amb = doc.scenario.T_amb;
    }

    detect::Detector det = make_detector(doc);
    const auto& first = data.rows.front();
    const double v0 = invert_ocv(doc.params.ocv, first.V - first.I * doc.params.R_o);
    det.reset(detect::Vec4(v0, v0, first.T_surf, first.T_surf));

    std::ostringstream csv;
    csv << "t_s,residual_V,residual_K,j2,jinf,segment,alarm\n";
    bool alarm = false;
    double alarm_time = 0.0;
    double prev_t = first.t;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& r = data.rows[i];
        const double dt = i == 0 ? (data.rows.size() > 1 ? data.rows[1].t - r.t
                                                         : doc.detector.sample_dt)
                                 : r.t - prev_t;
        prev_t = r.t;
        const auto rec = det.step(r.t, r.I, r.V, r.T_surf, data.T_amb, dt);
        csv << io::format_sig9(rec.t) << ',' << io::format_sig9(rec.r_v) << ','
            << io::format_sig9(rec.r_T) << ',' << io::format_sig9(rec.j2) << ','
            << io::format_sig9(rec.jinf) << ',' << rec.segment << ','
            << (rec.alarm ? 1 : 0) << "\n";
        if (rec.alarm && !alarm) {
            alarm = true;
            alarm_time = det.state().alarm_time;
        }
    }
    io::write_text_file(fl.out, csv.str());

    io::RunReport rep;
    rep.command = "detect";
    rep.inputs.emplace_back("config", io::content_digest(io::read_text_file(fl.config)));
    if (!data_path.empty())
        rep.inputs.emplace_back("telemetry", io::content_digest(io::read_text_file(data_path)));
    rep.fields.emplace_back("samples", std::to_string(data.rows.size()));
    rep.fields.emplace_back("threshold_j2", io::format_sig9(det.thresholds().j2));
    rep.fields.emplace_back("threshold_jinf", io::format_sig9(det.thresholds().jinf));
    rep.fields.emplace_back("inflation", io::format_sig9(det.thresholds().inflation));
    rep.fields.emplace_back("alarm", alarm ? "yes" : "no");
    if (alarm) rep.fields.emplace_back("alarm_time_s", io::format_sig9(alarm_time));
    emit_report(rep, report_path);

    if (alarm) {
        std::printf("first alarm at t = %s s\n", io::format_sig9(alarm_time).c_str());
        return kExitAlarm;
    }
    std::printf("no alarm\n");
    return kExitOk;
}

int run_identify(const CommonFlags& fl, const std::string& data_path,
                 const std::string& report_path) {
    using namespace battbee;
    const auto doc = load_doc(fl);
    identify::DataSet data = io::read_telemetry_csv(data_path);
    data.T_amb = doc.scenario.T_amb;
    data.capacity_hint = doc.params.capacity();

    std::vector<identify::FieldBound> bounds;
    using identify::Field;
    for (Field f : {Field::C_b, Field::C_s, Field::R_b, Field::R_o}) {
        const double v = identify::get_field(doc.params, {}, f);
        bounds.push_back({f, v / 3.0, v * 3.0});
    }
    identify::FitOptions opt;
    opt.seed = fl.seed;
    const auto report = identify::fit_parameters({data}, doc.params, bounds, opt);

    io::RunReport rep;
    rep.command = "identify";
    rep.inputs.emplace_back("config", io::content_digest(io::read_text_file(fl.config)));
    rep.inputs.emplace_back("telemetry", io::content_digest(io::read_text_file(data_path)));
    rep.fields.emplace_back("rmse_v_V", io::format_sig9(report.rmse_v));
    rep.fields.emplace_back("rmse_T_K", io::format_sig9(report.rmse_T));
    rep.fields.emplace_back("iterations", std::to_string(report.iterations));
    rep.fields.emplace_back("c_b_F", io::format_sig9(report.params.C_b));
    rep.fields.emplace_back("c_s_F", io::format_sig9(report.params.C_s));
    rep.fields.emplace_back("r_b_ohm", io::format_sig9(report.params.R_b));
    rep.fields.emplace_back("r_o_ohm", io::format_sig9(report.params.R_o));
    emit_report(rep, fl.out);
    if (!report_path.empty() && report_path != fl.out) emit_report(rep, report_path);
    return kExitOk;
}

int run_linearize(const CommonFlags& fl, double tol, const std::string& report_path) {
    using namespace battbee;
    const auto doc = load_doc(fl);
    const auto pwl = identify::piecewise_linearize(doc.params.ocv, tol);

    std::ostringstream csv;
    csv << "i,v_lo,v_hi,a_i,b_i\n";
    for (std::size_t i = 0; i < pwl.segments.size(); ++i) {
        const auto& s = pwl.segments[i];
        csv << i << ',' << io::format_sig9(s.v_lo) << ',' << io::format_sig9(s.v_hi) << ','
            << io::format_sig9(s.a) << ',' << io::format_sig9(s.b) << "\n";
    }
    io::write_text_file(fl.out, csv.str());

    io::RunReport rep;
    rep.command = "linearize";
    rep.inputs.emplace_back("config", io::content_digest(io::read_text_file(fl.config)));
    rep.fields.emplace_back("tolerance_V", io::format_sig9(tol));
    rep.fields.emplace_back("segments", std::to_string(pwl.segments.size()));
    rep.fields.emplace_back("psi_min", io::format_sig9(pwl.psi_min));
    rep.fields.emplace_back("psi_max", io::format_sig9(pwl.psi_max));
    emit_report(rep, report_path);
    return kExitOk;
}

int run_threshold(const CommonFlags& fl) {
    using namespace battbee;
    const auto doc = load_doc(fl);
    detect::Detector det = make_detector(doc);
    const auto& thr = det.thresholds();

    std::ostringstream txt;
    for (std::size_t i = 0; i < thr.j2_per_segment.size(); ++i) {
        txt << "segment " << i << ": j2 = " << io::format_sig9(thr.j2_per_segment[i])
            << ", jinf = " << io::format_sig9(thr.jinf_per_segment[i]) << "\n";
    }
    txt << "conservative: j2 = " << io::format_sig9(thr.j2)
        << ", jinf = " << io::format_sig9(thr.jinf) << "\n";
    std::fputs(txt.str().c_str(), stdout);

    io::RunReport rep;
    rep.command = "threshold";
    rep.inputs.emplace_back("config", io::content_digest(io::read_text_file(fl.config)));
    rep.fields.emplace_back("delta", io::format_sig9(thr.delta));
    rep.fields.emplace_back("segments", std::to_string(thr.j2_per_segment.size()));
    rep.fields.emplace_back("j2_conservative", io::format_sig9(thr.j2));
    rep.fields.emplace_back("jinf_conservative", io::format_sig9(thr.jinf));
    emit_report(rep, fl.out);
    return kExitOk;
}

int run_oracle_compare(const CommonFlags& fl, double gate) {
    using namespace battbee;
    spm::SpmParams sp;
    sp.neg.ocp = {0.6, -0.5, 0.1};
    sp.pos.ocp = {4.4, -1.0};
    sp.validate();

    const double dt = fl.dt.value_or(1.0);
    const double t_end = 1200.0;
    auto pulse = [](double t) { return t < 300.0 ? -4.0 : (t < 600.0 ? 0.0 : 4.0); };

    spm::SpmState s = spm::equilibrium_state(sp, 0.8);
    std::vector<double> v_spm, v_ecm, t_grid;
    for (double t = 0.0; t <= t_end + 1e-9; t += dt) {
        t_grid.push_back(t);
        v_spm.push_back(spm::spm_terminal_voltage(sp, s, pulse(t)));
        s = spm::spm_step(sp, s, pulse(t), dt);
    }

    BattBeeParams bp = spm::reduce_to_battbee(sp);
    Scenario sc;
    sc.dt = std::min(dt, 0.05 * bp.R_b * bp.C_s);
    sc.t_end = t_end;
    sc.initial.V_b = sc.initial.V_s = 0.8;
    for (double t = 0.0; t <= t_end + 1e-9; t += dt) sc.current.push_back({t, pulse(t)});
    const Trajectory tr = run_scenario(bp, sc);

    double sq = 0.0, v_lo = v_spm[0], v_hi = v_spm[0];
    const double stride = dt / sc.dt;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(i) * stride));
        const double d = v_spm[i] - tr.rows[std::min(idx, tr.rows.size() - 1)].V;
        sq += d * d;
        v_lo = std::min(v_lo, v_spm[i]);
        v_hi = std::max(v_hi, v_spm[i]);
    }
    const double rmse = std::sqrt(sq / static_cast<double>(t_grid.size()));
    const double swing = std::max(v_hi - v_lo, 1e-12);

    io::RunReport rep;
    rep.command = "oracle-compare";
    rep.fields.emplace_back("rmse_V", io::format_sig9(rmse));
    rep.fields.emplace_back("voltage_swing_V", io::format_sig9(swing));
    rep.fields.emplace_back("rmse_fraction", io::format_sig9(rmse / swing));
    rep.fields.emplace_back("gate_fraction", io::format_sig9(gate));
    rep.fields.emplace_back("pass", rmse <= gate * swing ? "yes" : "no");
    emit_report(rep, fl.out);
    std::printf("rmse = %s V (%.3f%% of swing)\n", io::format_sig9(rmse).c_str(),
                100.0 * rmse / swing);
    return rmse <= gate * swing ? kExitOk : kExitNumeric;
}

bool is_detectability_error(const std::string& msg) {
    return msg.find("not detectable") != std::string::npos ||
           msg.find("not Hurwitz") != std::string::npos ||
           msg.find("detectability") != std::string::npos;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"equivalent-circuit cell simulation, identification, and short-circuit detection"};
    app.require_subcommand(1);

    CommonFlags fl;
    std::string data_path, report_path;
    double tol = 0.01, gate = 0.05;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* opt = cmd->add_option("--config", fl.config, "scenario/parameter file");
        if (needs_config) opt->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", fl.out, "primary output file")->required();
        cmd->add_option("--dt", fl.dt, "time step override (s)");
        cmd->add_option("--seed", fl.seed, "optimizer seed");
        cmd->add_option("--eta", fl.eta, "forgetting factor override");
        cmd->add_option("--inflation", fl.inflation, "threshold inflation override");
        cmd->add_option("--report", report_path, "run report path (default: <out>.report.txt)");
    };

    auto* c_sim = app.add_subcommand("simulate", "integrate a scenario, write trajectory CSV");
    add_common(c_sim);

    auto* c_id = app.add_subcommand("identify", "fit electrical parameters from telemetry");
    add_common(c_id);
    c_id->add_option("--data", data_path, "telemetry CSV")->required()->check(CLI::ExistingFile);

    auto* c_lin = app.add_subcommand("linearize", "piecewise-linearize the OCV curve");
    add_common(c_lin);
    c_lin->add_option("--tol", tol, "max segment error (V)");

    auto* c_thr = app.add_subcommand("threshold", "compute per-segment residual thresholds");
    add_common(c_thr);

    auto* c_det = app.add_subcommand("detect", "run the residual detector over telemetry");
    add_common(c_det);
    c_det->add_option("--data", data_path, "telemetry CSV (omitted: synthesized from scenario)")
        ->check(CLI::ExistingFile);

    auto* c_oc = app.add_subcommand("oracle-compare",
                                    "electrochemical-oracle vs circuit-model voltage RMSE");
    add_common(c_oc, false);
    c_oc->add_option("--gate", gate, "pass threshold as fraction of voltage swing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitParse;
    }

    if (report_path.empty()) report_path = fl.out + ".report.txt";

    try {
        if (c_sim->parsed()) return run_simulate(fl, report_path);
        if (c_id->parsed()) return run_identify(fl, data_path, report_path);
        if (c_lin->parsed()) return run_linearize(fl, tol, report_path);
        if (c_thr->parsed()) return run_threshold(fl);
        if (c_det->parsed()) return run_detect(fl, data_path, report_path);
        if (c_oc->parsed()) return run_oracle_compare(fl, gate);
    } catch (const battbee::io::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitParse;
    } catch (const battbee::IntegrationError& e) {
        std::fprintf(stderr, "error: %s at t = %g s\n", e.what(), e.t_fail);
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return is_detectability_error(e.what()) ? kExitDetectability : kExitNumeric;
    }
    return kExitParse;
}
