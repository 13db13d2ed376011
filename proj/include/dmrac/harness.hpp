#pragma once

// Closed-loop assembly: plant + leader + auxiliary model + adaptive gains as
// one delayed ODE, integrated on a fixed grid and recorded at every step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dmrac/adaptive.hpp"
#include "dmrac/dde.hpp"
#include "dmrac/errors.hpp"
#include "dmrac/numerics.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/reference.hpp"
#include "dmrac/topology.hpp"

namespace dmrac {

inline constexpr double kDivergenceLimit = 1e6;

/// How the delayed input u(t−τ_u) reaching the plant is produced.
enum class PlantInput {
    /// Θ(t−τ_u)ᵀ η_m(t): the delayed gains applied to the realized leader regressor.
    DelayedGains,
    /// Linear interpolation of the control recorded at grid times.
    RecordedControl,
};

[[nodiscard]] inline std::string_view to_string(PlantInput p) noexcept {
    return p == PlantInput::DelayedGains ? "delayed_gains" : "recorded_control";
}

[[nodiscard]] inline PlantInput parse_plant_input(std::string_view s) {
    if (s == "delayed_gains") return PlantInput::DelayedGains;
    if (s == "recorded_control") return PlantInput::RecordedControl;
    throw Error(ErrorKind::ValidationError, "unknown plant input '" + std::string(s) + "'");
}

struct ControllerSettings {
    Mat gamma_theta;
    Mat gamma_phi;
    Mat q_tilde;                 // n×n, Q + Q_a per leader block
    std::vector<Mat> theta0;     // q×p per agent
    std::vector<Mat> theta_phi0; // p×p per agent
    std::vector<double> r_sign;
    bool adapt = true;
};

struct Scenario {
    std::string name;
    Fleet fleet;
    LeaderModel leader;
    Topology topology;
    ControllerSettings controller;
    double tau_x = 0.0;
    double tau_u = 0.0;
    double step = 0.005;
    double duration = 400.0;
    PlantInput plant_input = PlantInput::DelayedGains;
    ReferenceSignal reference;
    Vec x0;   // ℓn
    Vec xm0;  // n, shared by every leader copy
    Vec xa0;  // ℓn

    [[nodiscard]] Dims dims() const { return check_dims(fleet, leader); }
};

/// Everything validation establishes, kept for the run.
struct PreparedScenario {
    Dims dims;
    TopologyMatrices topology;
    ControllerConfig config;
    MatchingGains ideal;
};

namespace detail {

inline bool is_multiple(double delay, double step) {
    const double r = delay / step;
    return std::abs(r - std::round(r)) <= kGridSnap * std::max(1.0, r);
}

}  // namespace detail

/// Checks every scenario invariant; throws ValidationError (or a more specific
/// kind) naming the violated one.
[[nodiscard]] inline PreparedScenario validate_scenario(const Scenario& s) {
    const Dims d = s.dims();
    if (d.agents == 0) throw Error(ErrorKind::ValidationError, "scenario has no agents");
    if (s.topology.num_agents != d.agents) {
        throw Error(ErrorKind::ValidationError, "topology agent count differs from fleet size");
    }
    if (s.x0.size() != d.states() || s.xa0.size() != d.states() || s.xm0.size() != d.n) {
        throw Error(ErrorKind::ValidationError, "initial state sizes");
    }
    if (!(s.step > 0.0)) throw Error(ErrorKind::ValidationError, "step must be positive");
    if (!(s.duration >= 0.0)) throw Error(ErrorKind::ValidationError, "duration must be nonnegative");
    if (!(s.tau_x >= 0.0) || !(s.tau_x <= s.tau_u)) {
        throw Error(ErrorKind::ValidationError, "delays must satisfy 0 <= tau_x <= tau_u");
    }
    if (!detail::is_multiple(s.tau_x, s.step) || !detail::is_multiple(s.tau_u, s.step)) {
        throw Error(ErrorKind::ValidationError, "delays must be integer multiples of the step");
    }
    s.reference.validate();
    const auto& c = s.controller;
    if (c.theta0.size() != d.agents || c.theta_phi0.size() != d.agents) {
        throw Error(ErrorKind::ValidationError, "initial gains must be given for every agent");
    }
    for (std::size_t i = 0; i < d.agents; ++i) {
        if (c.theta0[i].rows() != d.q() || c.theta0[i].cols() != d.p || c.theta_phi0[i].rows() != d.p ||
            c.theta_phi0[i].cols() != d.p) {
            throw Error(ErrorKind::ValidationError, "initial gain shape of agent " + std::to_string(i + 1));
        }
    }
    if (c.q_tilde.rows() != d.n || c.q_tilde.cols() != d.n) {
        throw Error(ErrorKind::ValidationError, "q_tilde must be n×n");
    }
    if (!is_positive_definite(c.q_tilde)) throw Error(ErrorKind::ValidationError, "q_tilde is not SPD");

    check_hurwitz(s.leader.a_m);
    TopologyMatrices tm = build_matrices(s.topology, d.n);
    if (!check_balanced(tm)) throw Error(ErrorKind::UnbalancedTopology, "(L - A_m) 1 != 0");
    const ThresholdReport th = check_threshold(tm, s.topology.threshold);
    if (!th.pass) throw Error(ErrorKind::ValidationError, "topology below connectivity threshold");
    if (!leader_reachable(s.topology)) throw Error(ErrorKind::ValidationError, "leader cannot reach every agent");

    ControllerConfig cfg{c.gamma_theta, c.gamma_phi, lifted_lyapunov_matrix(s.leader, c.q_tilde, d.agents),
                         c.r_sign,      s.tau_x,     s.tau_u};
    cfg.validate(d.agents, d.n);
    MatchingGains ideal = matching_gains(s.fleet, s.leader);
    return PreparedScenario{d, std::move(tm), std::move(cfg), std::move(ideal)};
}

/// V_d = ē_aᵀPē_a + Σ_i (Γ_θ⁻¹)_ii tr[Θ̃^i W_i Θ̃^iᵀ] + Σ_i (Γ_φ⁻¹)_ii tr[Φ̃^i Φ̃^iᵀ],
/// W_i = |θ_r^{i*}|⁻¹ (entrywise absolute value of the inverse when p > 1).
[[nodiscard]] inline double lyapunov_monitor(const ControllerConfig& cfg, const Vec& e_a,
                                             const std::vector<Mat>& theta_err, const std::vector<Mat>& phi_err,
                                             const std::vector<Mat>& theta_r_star) {
    const std::size_t l = theta_err.size();
    if (phi_err.size() != l || theta_r_star.size() != l || cfg.gamma_theta.rows() != l ||
        cfg.p_matrix.rows() != e_a.size()) {
        throw Error(ErrorKind::DimensionMismatch, "lyapunov_monitor sizes");
    }
    double v = e_a.dot(cfg.p_matrix * e_a);
    const Mat gt_inv = solve_linear(cfg.gamma_theta, Mat::identity(l));
    const Mat gp_inv = solve_linear(cfg.gamma_phi, Mat::identity(l));
    for (std::size_t i = 0; i < l; ++i) {
        const Mat& tr = theta_r_star[i];
        Mat w;
        if (tr.rows() == 1 && tr.cols() == 1) {
            if (std::abs(tr(0, 0)) < 1e-12) throw Error(ErrorKind::SingularWeight, "theta_r* of agent " + std::to_string(i + 1));
            w = Mat{{1.0 / std::abs(tr(0, 0))}};
        } else {
            try {
                w = solve_linear(tr, Mat::identity(tr.rows()));
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::SingularMatrix) throw;
                throw Error(ErrorKind::SingularWeight, "theta_r* of agent " + std::to_string(i + 1));
            }
            for (std::size_t r = 0; r < w.rows(); ++r)
                for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = std::abs(w(r, c));
        }
        v += gt_inv(i, i) * (theta_err[i] * w * theta_err[i].transpose()).trace();
        v += gp_inv(i, i) * (phi_err[i] * phi_err[i].transpose()).trace();
    }
    return v;
}

struct TraceRow {
    double t = 0.0;
    double r = 0.0;  // r(t)
    Vec x, xm, xa, e, ea, u, ua, phi, theta, theta_phi;
    double vd = 0.0;
};

struct SimTrace {
    Dims dims;
    double tau_u = 0.0;
    std::vector<TraceRow> rows;
    /// max ‖η_m(t+τ_u|t) − η_m(t+τ_u)‖_∞ over the run
    double max_prediction_error = 0.0;
    /// max |u_rec(t−τ_u) − Θ(t−τ_u)ᵀη_m(t)| at grid times t ≥ τ_u
    double max_control_consistency = 0.0;
};

namespace detail {

/// Closed-loop signals at one evaluation point.
struct LoopSignals {
    Vec eta, eta_m, u_delayed, phi, ua, e, ea;
    ControllerState gains;
    double r_now = 0.0;
};

class ClosedLoop {
public:
    ClosedLoop(const Scenario& s, const PreparedScenario& prep)
        : s_(s), prep_(prep), d_(prep.dims), predictor_(s.leader, s.tau_x, s.tau_u, s.step) {
        const std::size_t ln = d_.states();
        off_x_ = 0;
        off_xm_ = ln;
        off_xa_ = 2 * ln;
        off_theta_ = 3 * ln;
        size_ = off_theta_ + ControllerState::flat_size(d_);
    }

    [[nodiscard]] std::size_t state_size() const noexcept { return size_; }
    [[nodiscard]] StateSlice x_slice() const { return {off_x_, d_.states()}; }
    [[nodiscard]] StateSlice xm_slice() const { return {off_xm_, d_.states()}; }
    [[nodiscard]] StateSlice theta_slice() const { return {off_theta_, ControllerState::theta_size(d_)}; }
    [[nodiscard]] std::size_t gains_offset() const noexcept { return off_theta_; }

    [[nodiscard]] Vec initial_state() const {
        Vec y(size_);
        y.set_segment(off_x_, s_.x0);
        for (std::size_t i = 0; i < d_.agents; ++i) y.set_segment(off_xm_ + i * d_.n, s_.xm0);
        y.set_segment(off_xa_, s_.xa0);
        ControllerState cs{s_.controller.theta0, s_.controller.theta_phi0};
        y.set_segment(off_theta_, cs.flatten());
        return y;
    }

    [[nodiscard]] LoopSignals signals(const StageTime& st, const Vec& y, const HistorySampler& hist) const {
        const std::size_t ln = d_.states();
        LoopSignals sig;
        const Vec x = y.segment(off_x_, ln);
        const Vec xm = y.segment(off_xm_, ln);
        const Vec xa = y.segment(off_xa_, ln);
        sig.gains = ControllerState::unflatten(y.span().subspan(off_theta_, ControllerState::flat_size(d_)), d_);

        const Vec xd = delayed(hist, "x", x, st.t, s_.tau_x);
        const Vec xmd = delayed(hist, "xm", xm, st.t, s_.tau_x);
        const Vec theta_now = y.segment(off_theta_, ControllerState::theta_size(d_));
        const std::vector<Mat> theta_d =
            ControllerState::unflatten_theta(delayed(hist, "theta", theta_now, st.t, s_.tau_u).span(), d_);

        Vec rd(d_.inputs());
        s_.reference.fill(st.interior() - s_.tau_u, rd.span());
        sig.r_now = s_.reference.value(st.interior());
        sig.eta = stacked_regressors(d_, x, xd, rd);
        sig.eta_m = stacked_regressors(d_, xm, xmd, rd);
        if (s_.plant_input == PlantInput::RecordedControl && s_.tau_u > 0.0) {
            sig.u_delayed = hist.sample("u", st.interior() - s_.tau_u);
        } else {
            sig.u_delayed = apply_gains(theta_d, sig.eta_m);
        }
        sig.phi = mismatch(sig.gains, theta_d, sig.eta, sig.eta_m);
        sig.ua = auxiliary_input(sig.gains, sig.phi);
        sig.e = sync_error(prep_.topology, x, xm);
        sig.ea = sig.e + xa;
        return sig;
    }

    [[nodiscard]] Vec derivative(const StageTime& st, const Vec& y, const HistorySampler& hist) const {
        const std::size_t ln = d_.states();
        const LoopSignals sig = signals(st, y, hist);
        const Vec x = y.segment(off_x_, ln);
        const Vec xm = y.segment(off_xm_, ln);
        const Vec xa = y.segment(off_xa_, ln);
        const Vec xd = delayed(hist, "x", x, st.t, s_.tau_x);
        Vec rd(d_.inputs());
        s_.reference.fill(st.interior() - s_.tau_u, rd.span());

        Vec dy(size_);
        dy.set_segment(off_x_, agent_derivative(s_.fleet, x, xd, sig.u_delayed));
        dy.set_segment(off_xm_, leader_derivative(s_.leader, xm, rd));
        dy.set_segment(off_xa_, aux_derivative(s_.leader, prep_.topology, xa, sig.ua));
        if (s_.controller.adapt) {
            const GainRates g =
                gain_derivatives(prep_.config, prep_.topology, s_.leader, sig.ea, sig.eta, sig.phi);
            ControllerState rates{g.d_theta, g.d_theta_phi};
            dy.set_segment(off_theta_, rates.flatten());
        }
        return dy;
    }

    /// η̄_m(t+τ_u|t) for every agent; identical leader blocks share one prediction.
    [[nodiscard]] Vec predict(const Vec& y, double t) {
        Vec out(d_.agents * d_.q());
        Vec last;
        std::span<const double> last_block;
        for (std::size_t i = 0; i < d_.agents; ++i) {
            const auto block = y.span().subspan(off_xm_ + i * d_.n, d_.n);
            if (i == 0 || !std::equal(block.begin(), block.end(), last_block.begin())) {
                last = predictor_.predict(block, t, s_.reference);
                last_block = block;
            }
            out.set_segment(i * d_.q(), last);
        }
        return out;
    }

    [[nodiscard]] double vd(const Vec& ea, const ControllerState& cs) const {
        std::vector<Mat> th_err, ph_err;
        for (std::size_t i = 0; i < d_.agents; ++i) {
            th_err.push_back(cs.theta[i] - prep_.ideal.stacked(i));
            ph_err.push_back(cs.theta_phi[i] - prep_.ideal.theta_phi[i]);
        }
        return lyapunov_monitor(prep_.config, ea, th_err, ph_err, prep_.ideal.theta_r);
    }

private:
    [[nodiscard]] static Vec delayed(const HistorySampler& hist, const char* name, const Vec& now, double t,
                                     double delay) {
        if (delay == 0.0) return now;
        return hist.sample(name, t - delay);
    }

    const Scenario& s_;
    const PreparedScenario& prep_;
    Dims d_;
    LeaderPredictor predictor_;
    std::size_t off_x_ = 0, off_xm_ = 0, off_xa_ = 0, off_theta_ = 0, size_ = 0;
};

}  // namespace detail

/// Integrates the closed loop over [0, duration] and records a row at every
/// grid time (duration/h + 1 rows).
[[nodiscard]] inline SimTrace run_scenario(const Scenario& s) {
    const PreparedScenario prep = validate_scenario(s);
    const Dims d = prep.dims;
    detail::ClosedLoop loop(s, prep);

    DdeState st;
    st.start_time = 0.0;
    st.step = s.step;
    st.state = loop.initial_state();
    st.track_state("x", loop.x_slice(), s.x0, s.tau_x);
    st.track_state("xm", loop.xm_slice(), st.state.segment(loop.xm_slice().offset, d.states()), s.tau_x);
    st.track_state("theta", loop.theta_slice(), st.state.segment(loop.theta_slice().offset, loop.theta_slice().length),
                   s.tau_u);
    st.track_external("u", Vec(d.inputs()), s.tau_u);

    SimTrace trace;
    trace.dims = d;
    trace.tau_u = s.tau_u;
    const std::size_t lag = static_cast<std::size_t>(std::llround(s.tau_u / s.step));
    std::deque<Vec> predictions;
    const double h = s.step;

    auto record = [&](DdeState& ds) {
        const double t = ds.time();
        const Vec& y = ds.state;
        const HistorySampler hist(ds.histories);
        const detail::LoopSignals sig = loop.signals(StageTime{t, t, t + h}, y, hist);

        if (y.segment(0, d.states()).norm_inf() > kDivergenceLimit) {
            throw Error(ErrorKind::DivergenceDetected, "agent state exceeds 1e6");
        }
        const Vec eta_pred = loop.predict(y, t);
        const Vec u = control(sig.gains, eta_pred);
        ds.external("u").push(u);

        predictions.push_back(eta_pred);
        if (predictions.size() > lag) {
            const Vec diff = predictions.front() - sig.eta_m;
            trace.max_prediction_error = std::max(trace.max_prediction_error, diff.norm_inf());
            predictions.pop_front();
        }
        if (t >= s.tau_u - kGridSnap * h) {
            const Vec recorded = s.tau_u > 0.0 ? ds.histories.at("u").buffer.sample(t - s.tau_u) : u;
            const Vec theta_d = s.tau_u > 0.0 ? hist.sample("theta", t - s.tau_u)
                                              : y.segment(loop.theta_slice().offset, loop.theta_slice().length);
            const Vec rebuilt = apply_gains(ControllerState::unflatten_theta(theta_d.span(), d), sig.eta_m);
            trace.max_control_consistency = std::max(trace.max_control_consistency, (recorded - rebuilt).norm_inf());
        }

        TraceRow row;
        row.t = t;
        row.r = s.reference.value(StageTime{t, t, t + h}.interior());
        row.x = y.segment(0, d.states());
        row.xm = y.segment(loop.xm_slice().offset, d.n);
        row.xa = y.segment(2 * d.states(), d.states());
        row.e = sig.e;
        row.ea = sig.ea;
        row.u = u;
        row.ua = sig.ua;
        row.phi = sig.phi;
        row.theta = y.segment(loop.theta_slice().offset, loop.theta_slice().length);
        row.theta_phi = y.segment(loop.theta_slice().offset + loop.theta_slice().length,
                                  ControllerState::flat_size(d) - loop.theta_slice().length);
        row.vd = loop.vd(sig.ea, sig.gains);
        trace.rows.push_back(std::move(row));
    };

    const auto steps = static_cast<std::size_t>(std::ceil(s.duration / h - 1e-9));
    trace.rows.reserve(steps + 1);
    record(st);
    (void)run([&](const StageTime& t, const Vec& y, const HistorySampler& hs) { return loop.derivative(t, y, hs); },
              std::move(st), s.duration, record);
    return trace;
}

/// Runs independent scenarios concurrently, one thread each.
[[nodiscard]] inline std::vector<SimTrace> run_scenarios(const std::vector<Scenario>& scenarios) {
    std::vector<std::future<SimTrace>> jobs;
    jobs.reserve(scenarios.size());
    for (const auto& s : scenarios) jobs.push_back(std::async(std::launch::async, [&s] { return run_scenario(s); }));
    std::vector<SimTrace> out;
    out.reserve(jobs.size());
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

struct MetricOptions {
    double final_window = 20.0;
    double settle_fraction = 0.05;
    double transient = -1.0;  // V_d slope is ignored before this time; < 0 means 2·τ_u
};

struct Metrics {
    double peak_error = 0.0;
    double final_mean_error = 0.0;
    double settling_time = 0.0;
    std::vector<double> gain_final;      // Θ entries then θ_φ entries
    std::vector<double> gain_final_range;
    std::vector<double> gain_excursion;
    double max_vd_slope = 0.0;

    /// Largest final-window range relative to its excursion (0 when nothing moved).
    [[nodiscard]] double worst_gain_settling_ratio() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < gain_final_range.size(); ++i) {
            if (gain_excursion[i] > 0.0) worst = std::max(worst, gain_final_range[i] / gain_excursion[i]);
        }
        return worst;
    }
};

[[nodiscard]] inline Metrics metrics(const SimTrace& trace, const MetricOptions& opt = {}) {
    if (trace.rows.empty()) throw Error(ErrorKind::EmptyTrace, "trace has no rows");
    const auto& rows = trace.rows;
    Metrics m;
    std::vector<double> err(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        err[k] = rows[k].e.norm2();
        m.peak_error = std::max(m.peak_error, err[k]);
    }
    const double t_end = rows.back().t;
    const double window_start = t_end - opt.final_window;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (rows[k].t >= window_start - 1e-9) {
            sum += err[k];
            ++count;
        }
    m.final_mean_error = count > 0 ? sum / static_cast<double>(count) : 0.0;

    const double bound = opt.settle_fraction * m.peak_error;
    m.settling_time = rows.front().t;
    for (std::size_t k = rows.size(); k-- > 0;) {
        if (err[k] >= bound && m.peak_error > 0.0) {
            m.settling_time = k + 1 < rows.size() ? rows[k + 1].t : rows[k].t;
            break;
        }
    }

    const auto gains = [](const TraceRow& r) {
        Vec g = r.theta;
        g.append(r.theta_phi);
        return g;
    };
    const Vec g0 = gains(rows.front());
    const std::size_t ng = g0.size();
    std::vector<double> lo(ng, std::numeric_limits<double>::infinity()), hi(ng, -std::numeric_limits<double>::infinity());
    std::vector<double> wlo = lo, whi = hi;
    for (const auto& r : rows) {
        const Vec g = gains(r);
        for (std::size_t i = 0; i < ng; ++i) {
            lo[i] = std::min(lo[i], g[i]);
            hi[i] = std::max(hi[i], g[i]);
            if (r.t >= window_start - 1e-9) {
                wlo[i] = std::min(wlo[i], g[i]);
                whi[i] = std::max(whi[i], g[i]);
            }
        }
    }
    const Vec gf = gains(rows.back());
    for (std::size_t i = 0; i < ng; ++i) {
        m.gain_final.push_back(gf[i]);
        m.gain_excursion.push_back(hi[i] - lo[i]);
        m.gain_final_range.push_back(whi[i] - wlo[i]);
    }

    const double transient = opt.transient < 0.0 ? 2.0 * trace.tau_u : opt.transient;
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        if (rows[k].t < transient - 1e-9) continue;
        const double slope = (rows[k + 1].vd - rows[k].vd) / (rows[k + 1].t - rows[k].t);
        m.max_vd_slope = std::max(m.max_vd_slope, slope);
    }
    return m;
}

}  // namespace dmrac
