// Command-line front end: run scenarios, validate them, list built-ins.
// Exit status: 0 success, 1 validation failure, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmrac/dmrac.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kRuntimeError = 2;

bool is_validation(dmrac::ErrorKind k) {
    using dmrac::ErrorKind;
    switch (k) {
        case ErrorKind::ParseError:
        case ErrorKind::ValidationError:
        case ErrorKind::UnbalancedTopology:
        case ErrorKind::NotHurwitz:
        case ErrorKind::NoMatchingSolution:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::NotPositiveDefinite:
        case ErrorKind::NotSymmetric:
            return true;
        default:
            return false;
    }
}

dmrac::Scenario load(const std::string& source, const std::vector<std::string>& overrides) {
    dmrac::Scenario s = dmrac::parse_scenario(dmrac::load_scenario_text(source), overrides);
    s.name = dmrac::builtin_text(source) ? source : std::filesystem::path(source).stem().string();
    return s;
}

int run_command(const std::string& source, const std::string& out_dir, const std::vector<std::string>& overrides) {
    const dmrac::Scenario s = load(source, overrides);
    const dmrac::SimTrace trace = dmrac::run_scenario(s);
    const dmrac::Metrics m = dmrac::metrics(trace);
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    dmrac::write_trace_csv((dir / "trace.csv").string(), trace);
    std::ofstream summary(dir / "summary.txt");
    if (!summary) throw dmrac::Error(dmrac::ErrorKind::ValidationError, "cannot write summary.txt");
    dmrac::write_summary(summary, s, trace, m);
    dmrac::write_summary(std::cout, s, trace, m);
    return kOk;
}

struct Check {
    std::string name;
    bool pass = false;
    std::string note;
};

int validate_command(const std::string& source, const std::vector<std::string>& overrides) {
    using namespace dmrac;
    const Scenario s = parse_scenario_unchecked(load_scenario_text(source), overrides);
    const Dims d = s.dims();
    std::vector<Check> checks;
    const auto attempt = [&](const std::string& name, auto&& body) {
        Check c{name, false, {}};
        try {
            c.pass = body(c.note);
        } catch (const Error& e) {
            c.note = e.what();
        }
        checks.push_back(std::move(c));
    };

    attempt("delays", [&](std::string& note) {
        note = "tau_x=" + io::format_short(s.tau_x) + " tau_u=" + io::format_short(s.tau_u);
        return s.tau_x >= 0.0 && s.tau_x <= s.tau_u && s.step > 0.0 && detail::is_multiple(s.tau_x, s.step) &&
               detail::is_multiple(s.tau_u, s.step);
    });
    attempt("balanced", [&](std::string&) { return check_balanced(build_matrices(s.topology, d.n)); });
    attempt("threshold(ϑ=" + io::format_short(s.topology.threshold) + ")", [&](std::string& note) {
        const Topology& t = s.topology;
        Mat lap(t.num_agents, t.num_agents);
        Mat lead(t.num_agents, t.num_agents);
        for (std::size_t i = 0; i < t.num_agents; ++i) {
            for (std::size_t j = 0; j < t.num_agents; ++j) lap(i, j) = i == j ? 1.0 : -t.follower_weights(i, j);
            lead(i, i) = t.leader_weights[i];
        }
        const ThresholdReport r = check_threshold(lift_matrices(lap, lead, d.n), t.threshold);
        note = "min_eig=" + io::format_short(r.min_laplacian_eigenvalue) +
               " min_leader=" + io::format_short(r.min_leader_weight);
        return r.pass;
    });
    attempt("reachable", [&](std::string&) { return leader_reachable(s.topology); });
    attempt("lyapunov_residual", [&](std::string& note) {
        const Mat p = solve_lyapunov(s.leader.a_m, s.controller.q_tilde);
        const double res = lyapunov_residual(s.leader.a_m, p, s.controller.q_tilde);
        note = "residual=" + io::format_short(res);
        return res <= 1e-9 && is_positive_definite(p);
    });
    attempt("matching", [&](std::string& note) {
        const MatchingGains g = matching_gains(s.fleet, s.leader);
        bool signs = true;
        for (std::size_t i = 0; i < d.agents && i < s.controller.r_sign.size(); ++i)
            signs = signs && ((g.theta_r[i](0, 0) < 0.0) == (s.controller.r_sign[i] < 0.0));
        note = signs ? "" : "r_sign disagrees with ideal theta_r";
        return signs;
    });
    attempt("scenario", [&](std::string&) {
        (void)validate_scenario(s);
        return true;
    });

    bool all = true;
    for (const auto& c : checks) {
        std::cout << c.name << '=' << (c.pass ? "pass" : "fail");
        if (!c.note.empty()) std::cout << "  (" << c.note << ')';
        std::cout << '\n';
        all = all && c.pass;
    }
    return all ? kOk : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed adaptive control of delayed multi-agent systems"};
    app.require_subcommand(1);

    std::string source;
    std::string out_dir = "out";
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "Simulate a scenario and write trace.csv and summary.txt");
    run->add_option("scenario", source, "Built-in name or scenario file")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--set", overrides, "Override section.key=value")->allow_extra_args(false);

    auto* validate = app.add_subcommand("validate", "Check delays, topology, Lyapunov and matching conditions");
    validate->add_option("scenario", source, "Built-in name or scenario file")->required();
    validate->add_option("--set", overrides, "Override section.key=value")->allow_extra_args(false);

    auto* list = app.add_subcommand("list-builtins", "Print built-in scenario names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidationFailure;
    }

    try {
        if (*list) {
            for (const auto& n : dmrac::builtin_names()) std::cout << n << '\n';
            return kOk;
        }
        if (*validate) return validate_command(source, overrides);
        return run_command(source, out_dir, overrides);
    } catch (const dmrac::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_validation(e.kind()) ? kValidationFailure : kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}
