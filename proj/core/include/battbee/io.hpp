#pragma once

#include "battbee/identify.hpp"
#include "battbee/params.hpp"
#include "battbee/sim.hpp"

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace battbee::io {

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, int line_no)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what
                                         : what),
          line(line_no) {}
    int line;
};

/// Detection settings as they appear in a scenario file's [detector] section.
struct DetectorSettings {
    double eta = 0.95;
    double eta_period = 1.0; // s
    std::vector<double> delta{0.01, 0.01, 0.1, 0.1}; // per-state initial error
    double inflation = 1.0;
    std::array<double, 4> q_proc{1e-8, 1e-8, 1e-4, 1e-4}; // process noise diagonal
    std::array<double, 2> r_meas{1e-4, 1e-2};             // measurement noise diagonal
    double pwl_tol = 0.01; // V, linearization tolerance when no table is given
    double sample_dt = 1.0; // s, telemetry sampling period

    double delta_norm() const;
};

struct ScenarioDoc {
    BattBeeParams params;
    Scenario scenario;
    DetectorSettings detector;
    bool has_detector = false;
};

/// INI-style document with [params], [scenario], [faults], [detector]
/// sections. Unknown sections/keys are rejected; errors carry line numbers.
ScenarioDoc parse_scenario_text(const std::string& text);
ScenarioDoc load_scenario_file(const std::string& path);
std::string serialize_scenario(const ScenarioDoc& doc);

/// Fixed 9-significant-digit formatting used for all CSV output.
std::string format_sig9(double v);

void write_trajectory_csv(const Trajectory& tr, std::ostream& os);
void write_trajectory_csv(const Trajectory& tr, const std::string& path);

/// Required columns: t_s, current_A, voltage_V, temp_surf_K; optional
/// temp_amb_K (first value sets T_amb). Extra columns are ignored so
/// trajectory CSVs can be replayed as telemetry.
identify::DataSet read_telemetry_csv(std::istream& is);
identify::DataSet read_telemetry_csv(const std::string& path);

void write_telemetry_csv(const identify::DataSet& data, const std::string& path);

/// Summary record emitted by every CLI command. Rendering is byte-stable for
/// identical inputs apart from the explicit timestamp line.
struct RunReport {
    std::string command;
    std::string timestamp; // ISO-8601, excluded from determinism guarantees
    std::vector<std::pair<std::string, std::string>> inputs; // name -> content digest
    std::vector<std::pair<std::string, std::string>> fields; // config echo + results

    std::string to_text() const;
};

/// FNV-1a 64-bit digest of a byte string, hex-encoded.
std::string content_digest(const std::string& bytes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace battbee::io
