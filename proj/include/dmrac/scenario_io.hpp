#pragma once

// Scenario files, built-in scenarios, trace CSV and summary output.
//
// Scenario format: line-oriented, `# comment`, `[section]` headers and
// `key = value` entries. Matrices are row-major with `,` between entries and
// `;` between rows; vectors are a single comma list. Unknown sections and
// keys are errors.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmrac/errors.hpp"
#include "dmrac/harness.hpp"
#include "dmrac/numerics.hpp"

namespace dmrac {

namespace io {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_number(std::string_view s) {
    const std::string t = trim(s);
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc() || res.ptr != last) {
        throw Error(ErrorKind::ParseError, "not a number: '" + t + "'");
    }
    return v;
}

inline Mat parse_matrix(std::string_view s) {
    std::vector<double> values;
    std::size_t cols = 0;
    const auto rows = split(s, ';');
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto entries = split(rows[r], ',');
        if (r == 0) cols = entries.size();
        if (entries.size() != cols) throw Error(ErrorKind::ParseError, "ragged matrix rows");
        for (const auto& e : entries) values.push_back(parse_number(e));
    }
    return Mat(rows.size(), cols, std::move(values));
}

inline Vec parse_vector(std::string_view s) {
    std::vector<double> values;
    for (const auto& e : split(s, ',')) values.push_back(parse_number(e));
    return Vec(std::move(values));
}

inline bool parse_bool(std::string_view s) {
    const std::string t = trim(s);
    if (t == "true") return true;
    if (t == "false") return false;
    throw Error(ErrorKind::ParseError, "expected true or false, got '" + t + "'");
}

inline std::string format_number(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

/// Shortest text that reads back to the same double, for labels.
inline std::string format_short(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct Entry {
    std::string value;
    std::size_t line = 0;  // 0 for overrides
};

/// section -> key -> entry.
struct RawScenario {
    std::map<std::string, std::map<std::string, Entry>> sections;
};

inline RawScenario parse_raw(std::string_view text) {
    RawScenario raw;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto at = [&](const std::string& msg) {
            return Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + msg);
        };
        if (body.front() == '[') {
            if (body.back() != ']') throw at("unterminated section header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            if (section.empty()) throw at("empty section name");
            if (raw.sections.contains(section)) throw at("duplicate section [" + section + "]");
            raw.sections[section];
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw at("expected key = value");
        if (section.empty()) throw at("entry outside any section");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw at("empty key");
        auto& sec = raw.sections[section];
        if (sec.contains(key)) throw at("duplicate key '" + key + "'");
        sec[key] = Entry{value, line_no};
    }
    return raw;
}

/// Splits `section.key` for overrides; agent sections are `agent.N.key`.
inline std::pair<std::string, std::string> split_override_path(std::string_view path) {
    std::size_t cut = path.find('.');
    if (cut != std::string_view::npos && path.substr(0, cut) == "agent") cut = path.find('.', cut + 1);
    if (cut == std::string_view::npos || cut == 0 || cut + 1 >= path.size()) {
        throw Error(ErrorKind::ParseError, "override '" + std::string(path) + "' is not section.key=value");
    }
    return {std::string(path.substr(0, cut)), std::string(path.substr(cut + 1))};
}

inline void apply_override(RawScenario& raw, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw Error(ErrorKind::ParseError, "override '" + std::string(assignment) + "' lacks '='");
    }
    const auto [section, key] = split_override_path(trim(assignment.substr(0, eq)));
    raw.sections[section][key] = Entry{trim(assignment.substr(eq + 1)), 0};
}

class SectionReader {
public:
    /// Unknown keys are rejected up front, so a misspelling is reported with
    /// its line before any "missing key" error it would otherwise cause.
    SectionReader(RawScenario& raw, std::string name, const std::vector<std::string>& allowed) : name_(std::move(name)) {
        const auto it = raw.sections.find(name_);
        if (it == raw.sections.end()) return;
        entries_ = &it->second;
        for (const auto& [k, e] : *entries_)
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
                throw Error(ErrorKind::ParseError, where(e) + "unknown key '" + k + "' in [" + name_ + "]");
    }

    [[nodiscard]] bool present() const noexcept { return entries_ != nullptr; }

    template <class F>
    auto get(const std::string& key, F&& parse) -> std::optional<decltype(parse(std::string_view{}))> {
        if (!entries_) return std::nullopt;
        const auto it = entries_->find(key);
        if (it == entries_->end()) return std::nullopt;
        try {
            return parse(std::string_view(it->second.value));
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError, where(it->second) + name_ + "." + key + ": " + e.detail());
        }
    }

    template <class F>
    auto require(const std::string& key, F&& parse) {
        auto v = get(key, std::forward<F>(parse));
        if (!v) throw Error(ErrorKind::ParseError, "missing required key " + name_ + "." + key);
        return std::move(*v);
    }

private:
    static std::string where(const Entry& e) {
        return e.line > 0 ? "line " + std::to_string(e.line) + ": " : "override: ";
    }

    std::string name_;
    std::map<std::string, Entry>* entries_ = nullptr;
};

inline Mat as_column_if_row(Mat m, std::size_t rows, std::size_t cols) {
    if (cols == 1 && m.rows() == 1 && m.cols() == rows) return m.transpose();
    return m;
}

}  // namespace io

/// Builds a Scenario from text plus `section.key=value` overrides without
/// checking the scenario invariants (see validate_scenario).
[[nodiscard]] inline Scenario parse_scenario_unchecked(std::string_view text,
                                                       const std::vector<std::string>& overrides = {}) {
    io::RawScenario raw = io::parse_raw(text);
    for (const auto& o : overrides) io::apply_override(raw, o);

    std::size_t agents = 0;
    for (const auto& [name, entries] : raw.sections) {
        static const std::set<std::string> known{"leader", "topology", "controller", "simulation", "reference"};
        if (known.contains(name)) continue;
        if (name.starts_with("agent.")) {
            std::size_t idx = 0;
            const std::string num = name.substr(6);
            const auto res = std::from_chars(num.data(), num.data() + num.size(), idx);
            if (res.ec != std::errc() || res.ptr != num.data() + num.size() || idx == 0) {
                throw Error(ErrorKind::ParseError, "bad agent section [" + name + "]");
            }
            agents = std::max(agents, idx);
            continue;
        }
        throw Error(ErrorKind::ParseError, "unknown section [" + name + "]");
    }
    if (agents == 0) throw Error(ErrorKind::ParseError, "no [agent.N] sections");

    const auto mat = [](std::string_view v) { return io::parse_matrix(v); };
    const auto vec = [](std::string_view v) { return io::parse_vector(v); };
    const auto num = [](std::string_view v) { return io::parse_number(v); };

    Scenario s;
    io::SectionReader leader(raw, "leader", {"a", "b"});
    if (!leader.present()) throw Error(ErrorKind::ParseError, "missing [leader] section");
    s.leader.a_m = leader.require("a", mat);
    s.leader.b_m = leader.require("b", mat);
    const std::size_t n = s.leader.a_m.rows();
    const std::size_t p = s.leader.b_m.cols();

    for (std::size_t i = 1; i <= agents; ++i) {
        io::SectionReader ag(raw, "agent." + std::to_string(i), {"a", "a_zeta", "b"});
        if (!ag.present()) throw Error(ErrorKind::ParseError, "missing [agent." + std::to_string(i) + "] section");
        AgentDynamics a;
        a.a = ag.require("a", mat);
        a.a_zeta = ag.get("a_zeta", mat).value_or(Mat(n, n));
        a.b = ag.require("b", mat);
        s.fleet.push_back(std::move(a));
    }
    const std::size_t q = 2 * n + p;

    io::SectionReader topo(raw, "topology", {"follower_weights", "leader_weights", "threshold"});
    if (!topo.present()) throw Error(ErrorKind::ParseError, "missing [topology] section");
    s.topology.num_agents = agents;
    s.topology.follower_weights = topo.get("follower_weights", mat).value_or(Mat(agents, agents));
    s.topology.leader_weights = topo.require("leader_weights", vec).values();
    s.topology.threshold = topo.get("threshold", num).value_or(0.1);

    std::vector<std::string> ctl_keys{"gamma_theta", "gamma_phi", "q_tilde", "r_sign", "adapt"};
    for (std::size_t i = 1; i <= agents; ++i) {
        ctl_keys.push_back("theta0." + std::to_string(i));
        ctl_keys.push_back("theta_phi0." + std::to_string(i));
    }
    io::SectionReader ctl(raw, "controller", ctl_keys);
    auto& c = s.controller;
    c.gamma_theta = ctl.get("gamma_theta", mat).value_or(Mat::identity(agents));
    c.gamma_phi = ctl.get("gamma_phi", mat).value_or(Mat::identity(agents));
    c.q_tilde = ctl.get("q_tilde", mat).value_or(Mat::identity(n));
    c.r_sign = ctl.get("r_sign", vec).value_or(Vec(agents, -1.0)).values();
    c.adapt = ctl.get("adapt", [](std::string_view v) { return io::parse_bool(v); }).value_or(true);
    for (std::size_t i = 1; i <= agents; ++i) {
        const std::string idx = std::to_string(i);
        c.theta0.push_back(io::as_column_if_row(ctl.get("theta0." + idx, mat).value_or(Mat(q, p)), q, p));
        c.theta_phi0.push_back(ctl.get("theta_phi0." + idx, mat).value_or(Mat(p, p)));
    }

    io::SectionReader sim(raw, "simulation",
                          {"tau_x", "tau_u", "step", "duration", "plant_input", "x0", "xm0", "xa0"});
    s.tau_x = sim.require("tau_x", num);
    s.tau_u = sim.require("tau_u", num);
    s.step = sim.get("step", num).value_or(0.005);
    s.duration = sim.get("duration", num).value_or(400.0);
    s.plant_input =
        sim.get("plant_input", [](std::string_view v) { return parse_plant_input(io::trim(v)); })
            .value_or(PlantInput::DelayedGains);
    s.x0 = sim.get("x0", vec).value_or(Vec(agents * n));
    s.xm0 = sim.get("xm0", vec).value_or(Vec(n));
    s.xa0 = sim.get("xa0", vec).value_or(Vec(agents * n));

    io::SectionReader ref(raw, "reference", {"kind", "amplitude", "period", "offset"});
    s.reference.kind =
        ref.get("kind", [](std::string_view v) { return parse_reference_kind(io::trim(v)); })
            .value_or(ReferenceKind::Constant);
    s.reference.amplitude = ref.get("amplitude", num).value_or(1.0);
    s.reference.period = ref.get("period", num).value_or(40.0);
    s.reference.offset = ref.get("offset", num).value_or(0.0);
    return s;
}

/// Parses and validates; invariant violations raise ValidationError (or a
/// more specific kind from the checks).
[[nodiscard]] inline Scenario parse_scenario(std::string_view text, const std::vector<std::string>& overrides = {}) {
    Scenario s = parse_scenario_unchecked(text, overrides);
    (void)validate_scenario(s);
    return s;
}

// Shared body of the two four-agent examples: leader, agents, controller and timing.
inline constexpr std::string_view kFourAgentBody = R"([leader]
a = 0, 1; -2, -3
b = 0; -2

[agent.1]
a = 0, 1; -3, -2
a_zeta = 0, 0; 0.3, 0.15
b = 0; 3

[agent.2]
a = 0, 1; -4, -3
a_zeta = 0, 0; 0.4, 0.2
b = 0; 4

[agent.3]
a = 0, 1; -5, -4
a_zeta = 0, 0; 0.5, 0.25
b = 0; 5

[agent.4]
a = 0, 1; -6, -5
a_zeta = 0, 0; 0.6, 0.3
b = 0; 6

[controller]
gamma_theta = 1, 0, 0, 0; 0, 1, 0, 0; 0, 0, 1, 0; 0, 0, 0, 1
gamma_phi = 1, 0, 0, 0; 0, 1, 0, 0; 0, 0, 1, 0; 0, 0, 0, 1
q_tilde = 0.2, 0; 0, 0.2
theta0.1 = -0.0125, -0.0125, -0.0125, -0.0125, -0.0125
theta0.2 = -0.01, -0.01, -0.01, -0.01, -0.01
theta0.3 = -0.0075, -0.0075, -0.0075, -0.0075, -0.0075
theta0.4 = -0.005, -0.005, -0.005, -0.005, -0.005
theta_phi0.1 = -0.4
theta_phi0.2 = -0.3
theta_phi0.3 = -0.2
theta_phi0.4 = -0.1
r_sign = -1, -1, -1, -1
adapt = true

[simulation]
tau_x = 3
tau_u = 5
step = 0.005
duration = 400
plant_input = delayed_gains
x0 = 0, 0, 0, 0, 0, 0, 0, 0
xm0 = 0, 0
xa0 = 0, 0, 0, 0, 0, 0, 0, 0

[reference]
kind = constant
amplitude = 1
period = 40
offset = 0
)";

inline constexpr std::string_view kExample1Topology = R"(# Every agent listens only to the leader.
[topology]
follower_weights = 0, 0, 0, 0; 0, 0, 0, 0; 0, 0, 0, 0; 0, 0, 0, 0
leader_weights = 1, 1, 1, 1
threshold = 0.1

)";

inline constexpr std::string_view kExample2Topology = R"(# Ring with neighbour weight 0.3 and leader weight 0.4.
[topology]
follower_weights = 0, 0.3, 0, 0.3; 0.3, 0, 0.3, 0; 0, 0.3, 0, 0.3; 0.3, 0, 0.3, 0
leader_weights = 0.4, 0.4, 0.4, 0.4
threshold = 0.1

)";

[[nodiscard]] inline std::vector<std::string> builtin_names() { return {"example1", "example2"}; }

/// Scenario text of a built-in, or nullopt for unknown names.
[[nodiscard]] inline std::optional<std::string> builtin_text(std::string_view name) {
    if (name == "example1") return std::string(kExample1Topology) + std::string(kFourAgentBody);
    if (name == "example2") return std::string(kExample2Topology) + std::string(kFourAgentBody);
    return std::nullopt;
}

/// Built-in name or file path -> scenario text.
[[nodiscard]] inline std::string load_scenario_text(const std::string& source) {
    if (auto t = builtin_text(source)) return *t;
    std::ifstream in(source);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open scenario '" + source + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

[[nodiscard]] inline Scenario builtin_scenario(std::string_view name, const std::vector<std::string>& overrides = {}) {
    auto t = builtin_text(name);
    if (!t) throw Error(ErrorKind::ValidationError, "unknown builtin '" + std::string(name) + "'");
    Scenario s = parse_scenario(*t, overrides);
    s.name = std::string(name);
    return s;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

[[nodiscard]] inline std::vector<std::string> trace_header(const Dims& d) {
    std::vector<std::string> h{"t", "r"};
    const auto idx = [](std::size_t i) { return std::to_string(i + 1); };
    const auto per_input = [&](const std::string& base, std::size_t i, std::size_t c) {
        return d.p == 1 ? base + "_" + idx(i) : base + "_" + idx(i) + "_" + idx(c);
    };
    for (std::size_t i = 0; i < d.agents; ++i)
        for (std::size_t j = 0; j < d.n; ++j) h.push_back("x_" + idx(i) + "_" + idx(j));
    for (std::size_t j = 0; j < d.n; ++j) h.push_back("xm_" + idx(j));
    for (const char* base : {"xa", "e", "ea"})
        for (std::size_t i = 0; i < d.agents; ++i)
            for (std::size_t j = 0; j < d.n; ++j) h.push_back(std::string(base) + "_" + idx(i) + "_" + idx(j));
    for (const char* base : {"u", "ua", "phi"})
        for (std::size_t i = 0; i < d.agents; ++i)
            for (std::size_t c = 0; c < d.p; ++c) h.push_back(per_input(base, i, c));
    for (std::size_t i = 0; i < d.agents; ++i)
        for (std::size_t k = 0; k < d.q() * d.p; ++k) h.push_back("theta_" + idx(i) + "_" + idx(k));
    for (std::size_t i = 0; i < d.agents; ++i)
        for (std::size_t k = 0; k < d.p * d.p; ++k) h.push_back("theta_phi_" + idx(i) + "_" + idx(k));
    h.push_back("V_d");
    return h;
}

[[nodiscard]] inline std::vector<double> trace_row_values(const TraceRow& r) {
    std::vector<double> v{r.t, r.r};
    for (const Vec* part : {&r.x, &r.xm, &r.xa, &r.e, &r.ea, &r.u, &r.ua, &r.phi, &r.theta, &r.theta_phi})
        v.insert(v.end(), part->begin(), part->end());
    v.push_back(r.vd);
    return v;
}

[[nodiscard]] inline CsvTable trace_table(const SimTrace& trace) {
    CsvTable t{trace_header(trace.dims), {}};
    t.rows.reserve(trace.rows.size());
    for (const auto& r : trace.rows) t.rows.push_back(trace_row_values(r));
    return t;
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << '\n';
    std::string line;
    for (const auto& row : t.rows) {
        line.clear();
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line += ',';
            line += io::format_number(row[i]);
        }
        line += '\n';
        out << line;
    }
}

inline void write_trace_csv(const std::string& path, const SimTrace& trace) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ValidationError, "cannot write '" + path + "'");
    write_csv(out, trace_table(trace));
}

[[nodiscard]] inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty CSV");
    ++line_no;
    t.header = io::split(line, ',');
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        std::vector<double> row;
        try {
            for (const auto& f : io::split(line, ',')) row.push_back(io::parse_number(f));
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.detail());
        }
        if (row.size() != t.header.size()) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": wrong field count");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_summary(std::ostream& out, const Scenario& s, const SimTrace& trace, const Metrics& m) {
    const auto num = io::format_number;
    out << "scenario: " << (s.name.empty() ? "custom" : s.name) << '\n';
    out << "rows: " << trace.rows.size() << '\n';
    out << "duration: " << io::format_short(trace.rows.back().t) << '\n';
    out << "step: " << io::format_short(s.step) << '\n';
    out << "reference: " << to_string(s.reference.kind) << '\n';
    out << "plant_input: " << to_string(s.plant_input) << '\n';
    out << "peak_error: " << num(m.peak_error) << '\n';
    out << "final_mean_error: " << num(m.final_mean_error) << '\n';
    out << "final_to_peak_ratio: " << num(m.peak_error > 0.0 ? m.final_mean_error / m.peak_error : 0.0) << '\n';
    out << "settling_time: " << num(m.settling_time) << '\n';
    out << "max_vd_slope: " << num(m.max_vd_slope) << '\n';
    out << "worst_gain_settling_ratio: " << num(m.worst_gain_settling_ratio()) << '\n';
    out << "max_prediction_error: " << num(trace.max_prediction_error) << '\n';
    out << "max_control_consistency: " << num(trace.max_control_consistency) << '\n';
    const Dims& d = trace.dims;
    const std::size_t per_theta = d.q() * d.p;
    for (std::size_t i = 0; i < d.agents; ++i) {
        out << "theta_final_" << i + 1 << ":";
        for (std::size_t k = 0; k < per_theta; ++k) out << ' ' << num(m.gain_final[i * per_theta + k]);
        out << '\n';
    }
    const std::size_t base = d.agents * per_theta;
    for (std::size_t i = 0; i < d.agents; ++i) {
        out << "theta_phi_final_" << i + 1 << ":";
        for (std::size_t k = 0; k < d.p * d.p; ++k) out << ' ' << num(m.gain_final[base + i * d.p * d.p + k]);
        out << '\n';
    }
}

}  // namespace dmrac
