#pragma once

// Distributed adaptive controller: regressors, leader-based prediction of the
// regressor one input delay ahead, the applied control, the input mismatch φ,
// the auxiliary input, augmented error and the gain update laws.
//
// Nothing here takes AgentDynamics: the controller only knows the leader,
// the topology, its own configuration and measured signals.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmrac/dde.hpp"
#include "dmrac/errors.hpp"
#include "dmrac/numerics.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/reference.hpp"
#include "dmrac/topology.hpp"

namespace dmrac {

struct ControllerConfig {
    Mat gamma_theta;  // ℓ×ℓ SPD
    Mat gamma_phi;    // ℓ×ℓ SPD
    Mat p_matrix;     // ℓn×ℓn SPD
    std::vector<double> r_sign;  // sign of θ_r^{i*}, ±1
    double tau_x = 0.0;
    double tau_u = 0.0;

    void validate(std::size_t agents, std::size_t n) const {
        if (gamma_theta.rows() != agents || gamma_theta.cols() != agents || gamma_phi.rows() != agents ||
            gamma_phi.cols() != agents || p_matrix.rows() != agents * n || p_matrix.cols() != agents * n ||
            r_sign.size() != agents) {
            throw Error(ErrorKind::DimensionMismatch, "controller configuration shapes");
        }
        if (!(tau_x >= 0.0) || !(tau_x <= tau_u)) {
            throw Error(ErrorKind::ValidationError, "delays must satisfy 0 <= tau_x <= tau_u");
        }
        for (double s : r_sign)
            if (s != 1.0 && s != -1.0) throw Error(ErrorKind::ValidationError, "r_sign entries must be +1 or -1");
        if (!is_positive_definite(gamma_theta)) throw Error(ErrorKind::ValidationError, "gamma_theta is not SPD");
        if (!is_positive_definite(gamma_phi)) throw Error(ErrorKind::ValidationError, "gamma_phi is not SPD");
        if (!is_positive_definite(p_matrix)) throw Error(ErrorKind::NotHurwitz, "P is not positive definite");
    }
};

/// P = I_ℓ ⊗ P_block with A_mᵀP_block + P_block A_m = −q_tilde.
[[nodiscard]] inline Mat lifted_lyapunov_matrix(const LeaderModel& leader, const Mat& q_tilde, std::size_t agents) {
    const Mat block = solve_lyapunov(leader.a_m, q_tilde);
    if (lyapunov_residual(leader.a_m, block, q_tilde) > 1e-9 || !is_positive_definite(block)) {
        throw Error(ErrorKind::NotHurwitz, "leader Lyapunov solution is not positive definite");
    }
    return kron(Mat::identity(agents), block);
}

/// Per-agent gains Θ^i (q×p, stacked [θ_x; θ_ζ; θ_r]) and θ_φ^i (p×p).
struct ControllerState {
    std::vector<Mat> theta;
    std::vector<Mat> theta_phi;

    [[nodiscard]] static ControllerState uniform(const Dims& d, double theta_value, double phi_value) {
        ControllerState cs;
        for (std::size_t i = 0; i < d.agents; ++i) {
            cs.theta.emplace_back(d.q(), d.p, theta_value);
            cs.theta_phi.push_back(phi_value * Mat::identity(d.p));
        }
        return cs;
    }

    [[nodiscard]] static std::size_t flat_size(const Dims& d) { return d.agents * (d.q() * d.p + d.p * d.p); }
    [[nodiscard]] static std::size_t theta_size(const Dims& d) { return d.agents * d.q() * d.p; }

    /// [Θ¹ row-major, …, Θ^ℓ, θ_φ¹ row-major, …, θ_φ^ℓ]
    [[nodiscard]] Vec flatten() const {
        Vec v;
        for (const auto& t : theta) v.append(Vec(t.values()));
        for (const auto& f : theta_phi) v.append(Vec(f.values()));
        return v;
    }

    [[nodiscard]] static ControllerState unflatten(std::span<const double> v, const Dims& d) {
        if (v.size() != flat_size(d)) throw Error(ErrorKind::DimensionMismatch, "flattened gain vector size");
        ControllerState cs;
        std::size_t at = 0;
        for (std::size_t i = 0; i < d.agents; ++i, at += d.q() * d.p)
            cs.theta.emplace_back(d.q(), d.p, std::vector<double>(v.begin() + at, v.begin() + at + d.q() * d.p));
        for (std::size_t i = 0; i < d.agents; ++i, at += d.p * d.p)
            cs.theta_phi.emplace_back(d.p, d.p, std::vector<double>(v.begin() + at, v.begin() + at + d.p * d.p));
        return cs;
    }

    /// Θ^i only, concatenated (the part whose delayed value enters φ).
    [[nodiscard]] static std::vector<Mat> unflatten_theta(std::span<const double> v, const Dims& d) {
        if (v.size() != theta_size(d)) throw Error(ErrorKind::DimensionMismatch, "flattened Θ size");
        std::vector<Mat> out;
        for (std::size_t i = 0, at = 0; i < d.agents; ++i, at += d.q() * d.p)
            out.emplace_back(d.q(), d.p, std::vector<double>(v.begin() + at, v.begin() + at + d.q() * d.p));
        return out;
    }
};

/// η_i = [x_i(t); x_i(t−τ_x); r(t−τ_u)]
[[nodiscard]] inline Vec regressor(const Vec& x_now, const Vec& x_delayed, const Vec& r_delayed) {
    if (x_now.size() != x_delayed.size()) throw Error(ErrorKind::DimensionMismatch, "regressor state sizes");
    Vec eta = x_now;
    eta.append(x_delayed);
    eta.append(r_delayed);
    return eta;
}

/// Per-agent regressors from stacked signals; result is ℓ·q long.
[[nodiscard]] inline Vec stacked_regressors(const Dims& d, const Vec& x_now, const Vec& x_delayed,
                                            const Vec& r_delayed_per_agent) {
    if (x_now.size() != d.states() || x_delayed.size() != d.states() || r_delayed_per_agent.size() != d.inputs()) {
        throw Error(ErrorKind::DimensionMismatch, "stacked regressor sizes");
    }
    Vec eta(d.agents * d.q());
    for (std::size_t i = 0; i < d.agents; ++i) {
        const std::size_t o = i * d.q();
        for (std::size_t k = 0; k < d.n; ++k) {
            eta[o + k] = x_now[i * d.n + k];
            eta[o + d.n + k] = x_delayed[i * d.n + k];
        }
        for (std::size_t k = 0; k < d.p; ++k) eta[o + 2 * d.n + k] = r_delayed_per_agent[i * d.p + k];
    }
    return eta;
}

/// Integrates the known leader ẋ_m(s) = A_m x_m(s) + B_m r(s−τ_u) over
/// (t, t+τ_u] with RK4 at step h. Every input needed lies in [t−τ_u, t], so
/// the prediction is exact up to integration error.
class LeaderPredictor {
public:
    LeaderPredictor(LeaderModel leader, double tau_x, double tau_u, double step)
        : leader_(std::move(leader)), tau_u_(tau_u), step_(step) {
        if (!(step_ > 0.0) || tau_x < 0.0 || tau_x > tau_u) {
            throw Error(ErrorKind::ValidationError, "predictor needs 0 <= tau_x <= tau_u and step > 0");
        }
        horizon_steps_ = static_cast<std::size_t>(std::llround(tau_u / step));
        lag_steps_ = static_cast<std::size_t>(std::llround((tau_u - tau_x) / step));
        const std::size_t n = leader_.state_dim();
        const std::size_t p = leader_.input_dim();
        x_.resize(n);
        tmp_.resize(n);
        lag_.resize(n);
        k_.assign(4, std::vector<double>(n));
        r_.resize(p);
    }

    [[nodiscard]] const LeaderModel& leader() const noexcept { return leader_; }

    /// η_m(t+τ_u | t) = [x_m(t+τ_u|t); x_m(t+τ_u−τ_x|t); r(t)] for one agent block.
    [[nodiscard]] Vec predict(std::span<const double> x_m_now, double t, const ReferenceSignal& ref) {
        const std::size_t n = leader_.state_dim();
        const std::size_t p = leader_.input_dim();
        if (x_m_now.size() != n) throw Error(ErrorKind::DimensionMismatch, "predictor state size");
        ref_ = &ref;
        std::copy(x_m_now.begin(), x_m_now.end(), x_.begin());
        const double h = step_;
        for (std::size_t k = 0; k < horizon_steps_; ++k) {
            if (k == lag_steps_) lag_ = x_;
            const double s = t + static_cast<double>(k) * h;
            const StageTime begin{s, s, s + h};
            const StageTime mid{s + 0.5 * h, s, s + h};
            const StageTime end{s + h, s, s + h};
            eval(begin, x_, k_[0]);
            axpy(x_, 0.5 * h, k_[0], tmp_);
            eval(mid, tmp_, k_[1]);
            axpy(x_, 0.5 * h, k_[1], tmp_);
            eval(mid, tmp_, k_[2]);
            axpy(x_, h, k_[2], tmp_);
            eval(end, tmp_, k_[3]);
            for (std::size_t i = 0; i < n; ++i)
                x_[i] = x_[i] + h / 6.0 * (k_[0][i] + 2.0 * k_[1][i] + 2.0 * k_[2][i] + k_[3][i]);
        }
        if (lag_steps_ == horizon_steps_) lag_ = x_;
        Vec eta(2 * n + p);
        for (std::size_t i = 0; i < n; ++i) {
            eta[i] = x_[i];
            eta[n + i] = lag_[i];
        }
        const double r_now = ref.value(StageTime{t, t, t + h}.interior());
        for (std::size_t i = 0; i < p; ++i) eta[2 * n + i] = r_now;
        return eta;
    }

private:
    void eval(const StageTime& st, const std::vector<double>& x, std::vector<double>& dx) {
        ref_fill(st.interior() - tau_u_);
        const Mat& a = leader_.a_m;
        const Mat& b = leader_.b_m;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < a.cols(); ++c) acc += a(r, c) * x[c];
            for (std::size_t c = 0; c < b.cols(); ++c) acc += b(r, c) * r_[c];
            dx[r] = acc;
        }
    }
    static void axpy(const std::vector<double>& x, double s, const std::vector<double>& k, std::vector<double>& out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s * k[i];
    }
    void ref_fill(double t) { ref_->fill(t, r_); }

    LeaderModel leader_;
    double tau_u_;
    double step_;
    std::size_t horizon_steps_ = 0;
    std::size_t lag_steps_ = 0;
    const ReferenceSignal* ref_ = nullptr;
    std::vector<double> x_, tmp_, lag_, r_;
    std::vector<std::vector<double>> k_;
};

[[nodiscard]] inline Vec predict_leader_regressor(const LeaderModel& m, const Vec& x_m_now, const ReferenceSignal& ref,
                                                  double t, double tau_u, double tau_x, double step) {
    LeaderPredictor pred(m, tau_x, tau_u, step);
    return pred.predict(x_m_now.span(), t, ref);
}

namespace detail {

// Θ^{i}ᵀ η_i for one agent: p outputs.
inline void gain_times_regressor(const Mat& theta, std::span<const double> eta, std::span<double> out) {
    for (std::size_t c = 0; c < theta.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < theta.rows(); ++r) acc += theta(r, c) * eta[r];
        out[c] = acc;
    }
}

inline void check_gain_shapes(const std::vector<Mat>& theta, const Vec& eta) {
    if (theta.empty()) throw Error(ErrorKind::DimensionMismatch, "no agents");
    if (eta.size() != theta.size() * theta.front().rows()) {
        throw Error(ErrorKind::DimensionMismatch, "regressor stack does not match gains");
    }
}

}  // namespace detail

/// ū = Θᵀ η̄ with Θ block-diagonal: u_i = Θ^iᵀ η_i. `eta` is ℓ·q long.
[[nodiscard]] inline Vec apply_gains(const std::vector<Mat>& theta, const Vec& eta) {
    detail::check_gain_shapes(theta, eta);
    const std::size_t q = theta.front().rows();
    const std::size_t p = theta.front().cols();
    Vec u(theta.size() * p);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i].rows() != q || theta[i].cols() != p) throw Error(ErrorKind::DimensionMismatch, "gain shape");
        detail::gain_times_regressor(theta[i], eta.span().subspan(i * q, q), u.span().subspan(i * p, p));
    }
    return u;
}

/// ū(t) = Θᵀ(t) η̄_m(t+τ_u|t).
[[nodiscard]] inline Vec control(const ControllerState& cs, const Vec& eta_m_pred) {
    return apply_gains(cs.theta, eta_m_pred);
}

/// φ = Θᵀ(t) η̄(t) − Θᵀ(t−τ_u) η̄_m(t)
[[nodiscard]] inline Vec mismatch(const ControllerState& cs, const std::vector<Mat>& theta_delayed, const Vec& eta_now,
                                  const Vec& eta_m_now) {
    return apply_gains(cs.theta, eta_now) - apply_gains(theta_delayed, eta_m_now);
}

/// Same, with Θ(t−τ_u) read from a history of flattened Θ.
[[nodiscard]] inline Vec mismatch(const ControllerState& cs, const HistoryBuffer& theta_history, const Vec& eta_now,
                                  const Vec& eta_m_now, double t, double tau_u, const Dims& d) {
    const Vec delayed = theta_history.sample(t - tau_u);
    return mismatch(cs, ControllerState::unflatten_theta(delayed.span(), d), eta_now, eta_m_now);
}

/// ū_a = Φ_φ φ, u_{a,i} = θ_φ^i φ_i.
[[nodiscard]] inline Vec auxiliary_input(const ControllerState& cs, const Vec& phi) {
    const std::size_t l = cs.theta_phi.size();
    if (l == 0 || phi.size() != l * cs.theta_phi.front().rows()) {
        throw Error(ErrorKind::DimensionMismatch, "auxiliary_input sizes");
    }
    const std::size_t p = cs.theta_phi.front().rows();
    Vec ua(l * p);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t r = 0; r < p; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < p; ++c) acc += cs.theta_phi[i](r, c) * phi[i * p + c];
            ua[i * p + r] = acc;
        }
    return ua;
}

/// ē = (𝕃_ℓ⊗I_n)x̄ − (𝔸_m⊗I_n)x̄_m
[[nodiscard]] inline Vec sync_error(const TopologyMatrices& t, const Vec& x_bar, const Vec& x_m_bar) {
    return t.laplacian_lifted * x_bar - t.leader_lifted * x_m_bar;
}

/// ē_a = ē + x̄_a
[[nodiscard]] inline Vec augmented_error(const TopologyMatrices& t, const Vec& x_bar, const Vec& x_m_bar,
                                         const Vec& x_a) {
    return sync_error(t, x_bar, x_m_bar) + x_a;
}

struct GainRates {
    std::vector<Mat> d_theta;      // q×p per agent
    std::vector<Mat> d_theta_phi;  // p×p per agent
};

/// s = 𝐁_mᵀ(𝕃_ℓ⊗I_n)ᵀ P ē_a, one p-block per agent.
[[nodiscard]] inline Vec adaptation_signal(const ControllerConfig& cfg, const TopologyMatrices& t,
                                           const LeaderModel& m, const Vec& e_a) {
    const std::size_t n = m.state_dim();
    const std::size_t p = m.input_dim();
    const std::size_t l = t.num_agents();
    if (e_a.size() != l * n) throw Error(ErrorKind::DimensionMismatch, "augmented error size");
    const Vec pe = cfg.p_matrix * e_a;
    Vec v(l * n);  // (𝕃⊗I)ᵀ P ē_a
    for (std::size_t j = 0; j < l; ++j)
        for (std::size_t i = 0; i < l; ++i) {
            const double w = t.laplacian_like(j, i);
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) v[i * n + k] += w * pe[j * n + k];
        }
    Vec s(l * p);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t c = 0; c < p; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < n; ++r) acc += m.b_m(r, c) * v[i * n + r];
            s[i * p + c] = acc;
        }
    return s;
}

/// Block-diagonal projection of the update laws:
///   dΘ^i   = −sign(θ_r^{i*}) · η_i (Γ_θ s)_iᵀ
///   dθ_φ^i = −(Γ_φ s)_i φ_iᵀ
[[nodiscard]] inline GainRates gain_derivatives(const ControllerConfig& cfg, const TopologyMatrices& t,
                                                const LeaderModel& m, const Vec& e_a, const Vec& eta,
                                                const Vec& phi) {
    const std::size_t p = m.input_dim();
    const std::size_t l = t.num_agents();
    if (eta.size() % l != 0 || phi.size() != l * p || cfg.r_sign.size() != l) {
        throw Error(ErrorKind::DimensionMismatch, "gain_derivatives sizes");
    }
    const std::size_t q = eta.size() / l;
    const Vec s = adaptation_signal(cfg, t, m, e_a);
    GainRates rates;
    for (std::size_t i = 0; i < l; ++i) {
        Mat dth(q, p);
        Mat dph(p, p);
        for (std::size_t c = 0; c < p; ++c) {
            double gs_theta = 0.0;
            double gs_phi = 0.0;
            for (std::size_t j = 0; j < l; ++j) {
                gs_theta += cfg.gamma_theta(i, j) * s[j * p + c];
                gs_phi += cfg.gamma_phi(i, j) * s[j * p + c];
            }
            for (std::size_t r = 0; r < q; ++r) dth(r, c) = -cfg.r_sign[i] * eta[i * q + r] * gs_theta;
            for (std::size_t r = 0; r < p; ++r) dph(c, r) = -gs_phi * phi[i * p + r];
        }
        rates.d_theta.push_back(std::move(dth));
        rates.d_theta_phi.push_back(std::move(dph));
    }
    return rates;
}

}  // namespace dmrac
