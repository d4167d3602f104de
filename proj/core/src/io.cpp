#include "battbee/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace battbee::io {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, int line) {
    if (tok.find(',') != std::string::npos)
        throw ParseError("unexpected ',' in numeric value '" + tok + "'", line);
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + tok + "'", line);
    }
    if (pos != tok.size()) throw ParseError("trailing characters in number: '" + tok + "'", line);
    if (!std::isfinite(v)) throw ParseError("non-finite value: '" + tok + "'", line);
    return v;
}

std::vector<double> parse_doubles(const std::string& value, int line) {
    std::istringstream iss(value);
    std::vector<double> out;
    std::string tok;
    while (iss >> tok) out.push_back(parse_double(tok, line));
    if (out.empty()) throw ParseError("empty value", line);
    return out;
}

double parse_one(const std::string& value, int line) {
    const auto v = parse_doubles(value, line);
    if (v.size() != 1) throw ParseError("expected a single number", line);
    return v[0];
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

double DetectorSettings::delta_norm() const {
    double s = 0.0;
    for (double d : delta) s += d * d;
    return std::sqrt(s);
}

ScenarioDoc parse_scenario_text(const std::string& text) {
    ScenarioDoc doc;
    bool saw_dt = false, saw_t_end = false;

    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const auto hash = raw.find_first_of("#;");
        std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;

        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError("unterminated section header", line);
            section = trim(s.substr(1, s.size() - 2));
            if (section != "params" && section != "scenario" && section != "faults" &&
                section != "detector")
                throw ParseError("unknown section [" + section + "]", line);
            if (section == "detector") doc.has_detector = true;
            continue;
        }

        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line);
        if (value.empty()) throw ParseError("empty value for '" + key + "'", line);
        if (section.empty()) throw ParseError("key '" + key + "' outside any section", line);

        if (section == "params") {
            BattBeeParams& p = doc.params;
            if (key == "c_b") p.C_b = parse_one(value, line);
            else if (key == "c_s") p.C_s = parse_one(value, line);
            else if (key == "r_b") p.R_b = parse_one(value, line);
            else if (key == "r_o") p.R_o = parse_one(value, line);
            else if (key == "c_core") p.C_core = parse_one(value, line);
            else if (key == "c_surf") p.C_surf = parse_one(value, line);
            else if (key == "r_core") p.R_core = parse_one(value, line);
            else if (key == "r_surf0") p.R_surf0 = parse_one(value, line);
            else if (key == "beta") p.beta = parse_one(value, line);
            else if (key == "h_ec") p.h_ec = parse_one(value, line);
            else if (key == "alpha1") p.alpha[0] = parse_one(value, line);
            else if (key == "alpha2") p.alpha[1] = parse_one(value, line);
            else if (key == "alpha3") p.alpha[2] = parse_one(value, line);
            else if (key == "alpha4") p.alpha[3] = parse_one(value, line);
            else if (key == "t_onset") p.T_onset = parse_one(value, line);
            else if (key == "t_peak") p.T_peak = parse_one(value, line);
            else if (key == "r_surf_min_frac") p.r_surf_min_frac = parse_one(value, line);
            else if (key == "q_decomp_max") p.q_decomp_max = parse_one(value, line);
            else if (key == "ocv") {
                try {
                    p.ocv = OcvPolynomial(parse_doubles(value, line));
                } catch (const std::invalid_argument& e) {
                    throw ParseError(std::string("ocv: ") + e.what(), line);
                }
            } else
                throw ParseError("unknown key '" + key + "' in [params]", line);
        } else if (section == "scenario") {
            Scenario& sc = doc.scenario;
            if (key == "dt") { sc.dt = parse_one(value, line); saw_dt = true; }
            else if (key == "t_end") { sc.t_end = parse_one(value, line); saw_t_end = true; }
            else if (key == "t_amb") {
                sc.T_amb = parse_one(value, line);
                sc.initial.T_core = sc.T_amb;
                sc.initial.T_surf = sc.T_amb;
            }
            else if (key == "interp") {
                if (value == "hold") sc.interp = CurrentInterp::hold;
                else if (value == "linear") sc.interp = CurrentInterp::linear;
                else throw ParseError("interp must be 'hold' or 'linear'", line);
            } else if (key == "current") {
                const auto v = parse_doubles(value, line);
                if (v.size() != 2) throw ParseError("current entry needs 't I'", line);
                sc.current.push_back({v[0], v[1]});
            } else if (key == "v_b0") sc.initial.V_b = parse_one(value, line);
            else if (key == "v_s0") sc.initial.V_s = parse_one(value, line);
            else if (key == "t_core0") sc.initial.T_core = parse_one(value, line);
            else if (key == "t_surf0") sc.initial.T_surf = parse_one(value, line);
            else if (key == "t_peak") sc.T_peak = parse_one(value, line);
            else
                throw ParseError("unknown key '" + key + "' in [scenario]", line);
        } else if (section == "faults") {
            if (key == "event") {
                const auto v = parse_doubles(value, line);
                if (v.size() != 3) throw ParseError("fault event needs 't g_isc1 g_isc2'", line);
                doc.scenario.faults.push_back({v[0], v[1], v[2]});
            } else
                throw ParseError("unknown key '" + key + "' in [faults]", line);
        } else { // detector
            DetectorSettings& d = doc.detector;
            if (key == "eta") d.eta = parse_one(value, line);
            else if (key == "eta_period") d.eta_period = parse_one(value, line);
            else if (key == "inflation") d.inflation = parse_one(value, line);
            else if (key == "pwl_tol") d.pwl_tol = parse_one(value, line);
            else if (key == "sample_dt") d.sample_dt = parse_one(value, line);
            else if (key == "delta") {
                d.delta = parse_doubles(value, line);
                if (d.delta.size() != 1 && d.delta.size() != 4)
                    throw ParseError("delta needs 1 or 4 values", line);
            } else if (key == "q_proc") {
                const auto v = parse_doubles(value, line);
                if (v.size() != 4) throw ParseError("q_proc needs 4 diagonal values", line);
                std::copy(v.begin(), v.end(), d.q_proc.begin());
            } else if (key == "r_meas") {
                const auto v = parse_doubles(value, line);
                if (v.size() != 2) throw ParseError("r_meas needs 2 diagonal values", line);
                std::copy(v.begin(), v.end(), d.r_meas.begin());
            } else
                throw ParseError("unknown key '" + key + "' in [detector]", line);
        }
    }

    if (!saw_dt) throw ParseError("[scenario] missing required key 'dt'", 0);
    if (!saw_t_end) throw ParseError("[scenario] missing required key 't_end'", 0);
    try {
        doc.params.validate(doc.scenario.T_amb);
        doc.scenario.validate(doc.params);
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), 0);
    }
    return doc;
}

ScenarioDoc load_scenario_file(const std::string& path) {
    return parse_scenario_text(read_text_file(path));
}

std::string serialize_scenario(const ScenarioDoc& doc) {
    std::ostringstream os;
    const BattBeeParams& p = doc.params;
    os << "[params]\n";
    os << "c_b = " << fmt17(p.C_b) << "\nc_s = " << fmt17(p.C_s) << "\n";
    os << "r_b = " << fmt17(p.R_b) << "\nr_o = " << fmt17(p.R_o) << "\n";
    os << "c_core = " << fmt17(p.C_core) << "\nc_surf = " << fmt17(p.C_surf) << "\n";
    os << "r_core = " << fmt17(p.R_core) << "\nr_surf0 = " << fmt17(p.R_surf0) << "\n";
    os << "beta = " << fmt17(p.beta) << "\nh_ec = " << fmt17(p.h_ec) << "\n";
    for (int i = 0; i < 4; ++i)
        os << "alpha" << i + 1 << " = " << fmt17(p.alpha[static_cast<std::size_t>(i)]) << "\n";
    os << "t_onset = " << fmt17(p.T_onset) << "\nt_peak = " << fmt17(p.T_peak) << "\n";
    os << "r_surf_min_frac = " << fmt17(p.r_surf_min_frac) << "\n";
    os << "q_decomp_max = " << fmt17(p.q_decomp_max) << "\n";
    os << "ocv =";
    for (double c : p.ocv.coefficients()) os << ' ' << fmt17(c);
    os << "\n";

    const Scenario& sc = doc.scenario;
    os << "\n[scenario]\n";
    os << "dt = " << fmt17(sc.dt) << "\nt_end = " << fmt17(sc.t_end) << "\n";
    os << "t_amb = " << fmt17(sc.T_amb) << "\n";
    os << "interp = " << (sc.interp == CurrentInterp::hold ? "hold" : "linear") << "\n";
    os << "v_b0 = " << fmt17(sc.initial.V_b) << "\nv_s0 = " << fmt17(sc.initial.V_s) << "\n";
    os << "t_core0 = " << fmt17(sc.initial.T_core) << "\nt_surf0 = " << fmt17(sc.initial.T_surf)
       << "\n";
    os << "t_peak = " << fmt17(sc.T_peak) << "\n";
    for (const auto& c : sc.current)
        os << "current = " << fmt17(c.t) << ' ' << fmt17(c.I) << "\n";

    if (!sc.faults.empty()) {
        os << "\n[faults]\n";
        for (const auto& f : sc.faults)
            os << "event = " << fmt17(f.t) << ' ' << fmt17(f.g_isc1) << ' ' << fmt17(f.g_isc2)
               << "\n";
    }

    if (doc.has_detector) {
        const DetectorSettings& d = doc.detector;
        os << "\n[detector]\n";
        os << "eta = " << fmt17(d.eta) << "\neta_period = " << fmt17(d.eta_period) << "\n";
        os << "inflation = " << fmt17(d.inflation) << "\n";
        os << "delta =";
        for (double v : d.delta) os << ' ' << fmt17(v);
        os << "\nq_proc =";
        for (double v : d.q_proc) os << ' ' << fmt17(v);
        os << "\nr_meas =";
        for (double v : d.r_meas) os << ' ' << fmt17(v);
        os << "\npwl_tol = " << fmt17(d.pwl_tol) << "\n";
        os << "sample_dt = " << fmt17(d.sample_dt) << "\n";
    }
    return os.str();
}

std::string format_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

const char* kTrajHeader =
    "t_s,v_b,v_s,soc_pct,voltage_V,temp_core_K,temp_surf_K,"
    "q_ohm_W,q_ec_W,q_decomp_W,q_exo_W,current_A,g_isc1_S,g_isc2_S";

} // namespace

void write_trajectory_csv(const Trajectory& tr, std::ostream& os) {
    os << kTrajHeader << "\n";
    for (const auto& r : tr.rows) {
        os << format_sig9(r.t) << ',' << format_sig9(r.V_b) << ',' << format_sig9(r.V_s) << ','
           << format_sig9(r.soc) << ',' << format_sig9(r.V) << ',' << format_sig9(r.T_core)
           << ',' << format_sig9(r.T_surf) << ',' << format_sig9(r.q_ohm) << ','
           << format_sig9(r.q_ec) << ',' << format_sig9(r.q_decomp) << ','
           << format_sig9(r.q_exo) << ',' << format_sig9(r.I) << ',' << format_sig9(r.g_isc1)
           << ',' << format_sig9(r.g_isc2) << "\n";
    }
}

void write_trajectory_csv(const Trajectory& tr, const std::string& path) {
    std::ostringstream os;
    write_trajectory_csv(tr, os);
    write_text_file(path, os.str());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else
            cur.push_back(ch);
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

identify::DataSet read_telemetry_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty file", 0);
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* req : {"t_s", "current_A", "voltage_V", "temp_surf_K"})
        if (!col.count(req)) throw ParseError(std::string("missing column '") + req + "'", 1);
    const bool has_amb = col.count("temp_amb_K") > 0;

    identify::DataSet data;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                                 std::to_string(cells.size()),
                             line_no);
        identify::DataRow row;
        row.t = parse_double(cells[col["t_s"]], line_no);
        row.I = parse_double(cells[col["current_A"]], line_no);
        row.V = parse_double(cells[col["voltage_V"]], line_no);
        row.T_surf = parse_double(cells[col["temp_surf_K"]], line_no);
        if (has_amb && data.rows.empty())
            data.T_amb = parse_double(cells[col["temp_amb_K"]], line_no);
        if (!data.rows.empty() && row.t <= data.rows.back().t)
            throw ParseError("t_s not strictly increasing", line_no);
        data.rows.push_back(row);
    }
    if (data.rows.empty()) throw ParseError("no data rows", line_no);
    return data;
}

identify::DataSet read_telemetry_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'", 0);
    return read_telemetry_csv(f);
}

void write_telemetry_csv(const identify::DataSet& data, const std::string& path) {
    std::ostringstream os;
    os << "t_s,current_A,voltage_V,temp_surf_K,temp_amb_K\n";
    for (const auto& r : data.rows)
        os << format_sig9(r.t) << ',' << format_sig9(r.I) << ',' << format_sig9(r.V) << ','
           << format_sig9(r.T_surf) << ',' << format_sig9(data.T_amb) << "\n";
    write_text_file(path, os.str());
}

std::string RunReport::to_text() const {
    std::ostringstream os;
    os << "command: " << command << "\n";
    os << "timestamp: " << timestamp << "\n";
    for (const auto& [name, digest] : inputs) os << "input." << name << ": " << digest << "\n";
    for (const auto& [key, value] : fields) os << key << ": " << value << "\n";
    return os.str();
}

std::string content_digest(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open '" + path + "'", 0);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << content;
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

} // namespace battbee::io
