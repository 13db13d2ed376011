#include <gtest/gtest.h>

#include <cmath>

#include "dmrac/harness.hpp"
#include "dmrac/scenario_io.hpp"

using namespace dmrac;

namespace {

const Mat kPBlock{{0.25, 0.05}, {0.05, 0.05}};

ControllerConfig single_config(const Mat& p) {
    return ControllerConfig{Mat::identity(1), Mat::identity(1), p, {-1.0}, 3.0, 5.0};
}

Scenario short_run(std::string_view name, double duration) {
    Scenario s = builtin_scenario(name);
    s.duration = duration;
    return s;
}

// Θ(0), θ_φ(0) set to the matching gains and adaptation switched off.
Scenario matched_frozen(std::string_view name, double duration) {
    Scenario s = short_run(name, duration);
    const MatchingGains g = matching_gains(s.fleet, s.leader);
    for (std::size_t i = 0; i < s.fleet.size(); ++i) {
        s.controller.theta0[i] = g.stacked(i);
        s.controller.theta_phi0[i] = g.theta_phi[i];
    }
    s.controller.adapt = false;
    return s;
}

double max_tracking_gap(const SimTrace& tr) {
    double worst = 0.0;
    for (const auto& row : tr.rows)
        for (std::size_t i = 0; i < tr.dims.agents; ++i)
            for (std::size_t k = 0; k < tr.dims.n; ++k)
                worst = std::max(worst, std::abs(row.x[i * tr.dims.n + k] - row.xm[k]));
    return worst;
}

SimTrace synthetic_trace(const std::vector<double>& errors, double h) {
    SimTrace tr;
    tr.dims = Dims{1, 1, 1};
    tr.tau_u = 0.0;
    for (std::size_t k = 0; k < errors.size(); ++k) {
        TraceRow r;
        r.t = static_cast<double>(k) * h;
        r.e = Vec{errors[k]};
        r.theta = Vec(3);
        r.theta_phi = Vec(1);
        tr.rows.push_back(std::move(r));
    }
    return tr;
}

}  // namespace

TEST(LyapunovMonitor, EquilibriumIsZero) {
    const std::vector<Mat> zero_theta{Mat(5, 1)}, zero_phi{Mat(1, 1)}, tr{Mat{{-2.0 / 3.0}}};
    EXPECT_EQ(lyapunov_monitor(single_config(kPBlock), Vec(2), zero_theta, zero_phi, tr), 0.0);
}

TEST(LyapunovMonitor, RankOneGainErrorOfFirstAgent) {
    const std::vector<Mat> theta_err{Mat::column(Vec{1, 0, 0, 0, 0})}, phi_err{Mat(1, 1)}, tr{Mat{{-2.0 / 3.0}}};
    EXPECT_NEAR(lyapunov_monitor(single_config(kPBlock), Vec(2), theta_err, phi_err, tr), 1.5, 1e-15);
}

TEST(LyapunovMonitor, QuadraticFormEntry) {
    const std::vector<Mat> theta_err{Mat(5, 1)}, phi_err{Mat(1, 1)}, tr{Mat{{-2.0 / 3.0}}};
    EXPECT_EQ(lyapunov_monitor(single_config(kPBlock), Vec{1, 0}, theta_err, phi_err, tr), 0.25);
}

TEST(LyapunovMonitor, AuxiliaryGainErrorWeightedByGammaInverse) {
    ControllerConfig cfg = single_config(kPBlock);
    cfg.gamma_phi = Mat{{4.0}};
    const std::vector<Mat> theta_err{Mat(5, 1)}, phi_err{Mat{{2.0}}}, tr{Mat{{-2.0 / 3.0}}};
    EXPECT_EQ(lyapunov_monitor(cfg, Vec(2), theta_err, phi_err, tr), 1.0);
}

TEST(LyapunovMonitor, SingularWeightRaises) {
    const std::vector<Mat> theta_err{Mat(5, 1)}, phi_err{Mat(1, 1)}, tr{Mat{{1e-13}}};
    try {
        (void)lyapunov_monitor(single_config(kPBlock), Vec(2), theta_err, phi_err, tr);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularWeight);
    }
}

TEST(Metrics, ZeroTrace) {
    const Metrics m = metrics(synthetic_trace(std::vector<double>(50, 0.0), 0.1));
    EXPECT_EQ(m.peak_error, 0.0);
    EXPECT_EQ(m.final_mean_error, 0.0);
    EXPECT_EQ(m.settling_time, 0.0);
    EXPECT_EQ(m.max_vd_slope, 0.0);
    for (double g : m.gain_final) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(m.worst_gain_settling_ratio(), 0.0);
}

TEST(Metrics, ExponentialSettlesAtLogTwenty) {
    std::vector<double> e;
    for (int k = 0; k <= 100; ++k) e.push_back(std::exp(-0.1 * k));
    const Metrics m = metrics(synthetic_trace(e, 0.1));
    EXPECT_EQ(m.peak_error, 1.0);
    EXPECT_NEAR(m.settling_time, std::log(20.0), 0.1);
}

TEST(Metrics, PositiveSlopeAfterTransientOnly) {
    SimTrace tr = synthetic_trace(std::vector<double>(21, 0.0), 1.0);
    tr.tau_u = 2.5;  // transient window 5 s
    for (auto& r : tr.rows) r.vd = r.t < 4.5 ? 10.0 * r.t : 45.0 - (r.t - 4.0);
    tr.rows[10].vd += 3.0;
    const Metrics m = metrics(tr);
    EXPECT_EQ(m.max_vd_slope, 2.0);
}

TEST(Metrics, EmptyTraceRaises) {
    try {
        (void)metrics(SimTrace{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyTrace);
    }
}

TEST(RunScenario, ZeroReferenceZeroStateStaysZero) {
    Scenario s = short_run("example2", 12.0);
    s.reference.amplitude = 0.0;
    const SimTrace tr = run_scenario(s);
    for (const auto& row : tr.rows) {
        for (const Vec* v : {&row.x, &row.xm, &row.xa, &row.e, &row.ea, &row.u, &row.ua, &row.phi})
            EXPECT_EQ(v->norm_inf(), 0.0) << "t=" << row.t;
    }
    const Vec theta0 = tr.rows.front().theta;
    EXPECT_EQ(tr.rows.back().theta, theta0);
}

TEST(RunScenario, MatchedFrozenGainsTrackExactly) {
    const SimTrace tr = run_scenario(matched_frozen("example1", 40.0));
    EXPECT_LE(max_tracking_gap(tr), 1e-6);
    for (const auto& row : tr.rows) EXPECT_LE(row.e.norm_inf(), 1e-6);
}

TEST(RunScenario, MatchedFrozenGainsWithRecordedControlInput) {
    // Linear interpolation of the recorded control adds an O(h²) input error,
    // so tracking is close but not exact.
    Scenario s = matched_frozen("example1", 40.0);
    s.plant_input = PlantInput::RecordedControl;
    EXPECT_LE(max_tracking_gap(run_scenario(s)), 1e-5);
}

TEST(RunScenarioProperty, BalancedConsensusStartStaysSynchronized) {
    // x̄(0) = x̄_m(0) = c·1, r ≡ 0, Θ(0) = Θ*: ē(0) = 0 by balancedness and the
    // matched closed loop keeps it there.
    for (const char* name : {"example1", "example2"}) {
        Scenario s = matched_frozen(name, 30.0);
        s.reference.amplitude = 0.0;
        const double c = 0.7;
        s.x0 = Vec(8, c);
        s.xm0 = Vec(2, c);
        const SimTrace tr = run_scenario(s);
        EXPECT_LE(tr.rows.front().e.norm_inf(), 1e-15) << name;
        for (const auto& row : tr.rows) ASSERT_LE(row.e.norm_inf(), 1e-6) << name << " t=" << row.t;
    }
}

TEST(RunScenario, RowPerGridTime) {
    const SimTrace tr = run_scenario(short_run("example1", 1.0));
    ASSERT_EQ(tr.rows.size(), 201u);
    EXPECT_EQ(tr.rows.front().t, 0.0);
    EXPECT_NEAR(tr.rows.back().t, 1.0, 1e-12);
}

TEST(RunScenario, ZeroDurationGivesInitialRow) {
    const SimTrace tr = run_scenario(short_run("example1", 0.0));
    ASSERT_EQ(tr.rows.size(), 1u);
    EXPECT_EQ(tr.rows[0].t, 0.0);
}

TEST(RunScenarioProperty, TraceCompleteAndFinite) {
    const SimTrace tr = run_scenario(short_run("example2", 30.0));
    const Dims d = tr.dims;
    for (const auto& row : tr.rows) {
        EXPECT_EQ(row.x.size(), d.states());
        EXPECT_EQ(row.xm.size(), d.n);
        EXPECT_EQ(row.xa.size(), d.states());
        EXPECT_EQ(row.e.size(), d.states());
        EXPECT_EQ(row.ea.size(), d.states());
        EXPECT_EQ(row.u.size(), d.inputs());
        EXPECT_EQ(row.ua.size(), d.inputs());
        EXPECT_EQ(row.phi.size(), d.inputs());
        EXPECT_EQ(row.theta.size(), d.agents * d.q() * d.p);
        EXPECT_EQ(row.theta_phi.size(), d.agents * d.p * d.p);
        for (const Vec* v : {&row.x, &row.xm, &row.xa, &row.e, &row.ea, &row.u, &row.ua, &row.phi, &row.theta,
                             &row.theta_phi})
            ASSERT_TRUE(v->all_finite()) << "t=" << row.t;
        ASSERT_TRUE(std::isfinite(row.vd));
        ASSERT_TRUE(std::isfinite(row.r));
    }
}

TEST(RunScenarioProperty, GainsStayBounded) {
    const SimTrace tr = run_scenario(short_run("example1", 60.0));
    for (const auto& row : tr.rows) {
        EXPECT_LE(row.theta.norm2(), 10.0);
        EXPECT_LE(row.theta_phi.norm2(), 10.0);
    }
}

TEST(RunScenarioProperty, Determinism) {
    const Scenario s = short_run("example2", 15.0);
    const SimTrace a = run_scenario(s);
    const SimTrace b = run_scenario(s);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        ASSERT_EQ(a.rows[k].x, b.rows[k].x);
        ASSERT_EQ(a.rows[k].theta, b.rows[k].theta);
        ASSERT_EQ(a.rows[k].vd, b.rows[k].vd);
    }
}

TEST(RunScenarios, ParallelMatchesSequential) {
    const std::vector<Scenario> batch{short_run("example1", 12.0), short_run("example2", 12.0)};
    const std::vector<SimTrace> par = run_scenarios(batch);
    ASSERT_EQ(par.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const SimTrace seq = run_scenario(batch[i]);
        ASSERT_EQ(par[i].rows.size(), seq.rows.size());
        EXPECT_EQ(par[i].rows.back().x, seq.rows.back().x);
        EXPECT_EQ(par[i].rows.back().theta, seq.rows.back().theta);
    }
}

TEST(RunScenario, PredictionAndRecordedControlAreConsistent) {
    const SimTrace tr = run_scenario(short_run("example1", 30.0));
    EXPECT_LE(tr.max_prediction_error, 1e-6);
    EXPECT_LE(tr.max_control_consistency, 1e-9);
}

TEST(RunScenario, LyapunovMonitorDoesNotRiseAfterTransient) {
    const Metrics m = metrics(run_scenario(short_run("example1", 40.0)));
    EXPECT_LE(m.max_vd_slope, 1e-6);
}

TEST(RunScenario, DivergenceDetected) {
    Scenario s = short_run("example1", 200.0);
    s.controller.r_sign = {1, 1, 1, 1};  // wrong sign drives the gains the wrong way
    s.controller.gamma_theta = 1e4 * Mat::identity(4);
    s.reference.amplitude = 100.0;
    try {
        (void)run_scenario(s);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::DivergenceDetected || e.kind() == ErrorKind::NonFiniteState);
    }
}

TEST(ValidateScenario, InvertedDelays) {
    Scenario s = short_run("example1", 1.0);
    s.tau_x = 6.0;
    try {
        (void)validate_scenario(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ValidationError);
        EXPECT_NE(std::string(e.what()).find("tau_x <= tau_u"), std::string::npos);
    }
}

TEST(ValidateScenario, DelayOffGrid) {
    Scenario s = short_run("example1", 1.0);
    s.tau_x = 3.0025;
    EXPECT_THROW((void)validate_scenario(s), Error);
}

TEST(ValidateScenario, UnbalancedTopology) {
    Scenario s = short_run("example2", 1.0);
    s.topology.leader_weights[0] = 0.5;
    try {
        (void)validate_scenario(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnbalancedTopology);
    }
}

TEST(ValidateScenario, InitialStateSizes) {
    Scenario s = short_run("example1", 1.0);
    s.x0 = Vec(7);
    EXPECT_THROW((void)validate_scenario(s), Error);
}

TEST(ValidateScenario, BuiltinsPass) {
    for (const auto& name : builtin_names()) {
        const PreparedScenario p = validate_scenario(builtin_scenario(name));
        EXPECT_EQ(p.dims.agents, 4u);
        EXPECT_LE((p.config.p_matrix - kron(Mat::identity(4), kPBlock)).max_abs(), 1e-9);
    }
}

TEST(PlantInput, RoundTripNames) {
    for (auto p : {PlantInput::DelayedGains, PlantInput::RecordedControl})
        EXPECT_EQ(parse_plant_input(to_string(p)), p);
    EXPECT_THROW((void)parse_plant_input("now"), Error);
}
