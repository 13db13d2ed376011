#pragma once

// Physical side of the simulation: heterogeneous delayed agents, the known
// leader, the auxiliary model, and the ideal (matching) gains. The ideal
// gains are a diagnostic and test oracle only; the controller never sees
// AgentDynamics.

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dmrac/errors.hpp"
#include "dmrac/numerics.hpp"
#include "dmrac/topology.hpp"

namespace dmrac {

/// ẋ_i = A_i x_i(t) + A_i^ζ x_i(t−τ_x) + B_i u_i(t−τ_u)
struct AgentDynamics {
    Mat a;
    Mat a_zeta;
    Mat b;
};

using Fleet = std::vector<AgentDynamics>;

struct LeaderModel {
    Mat a_m;
    Mat b_m;

    [[nodiscard]] std::size_t state_dim() const noexcept { return a_m.rows(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return b_m.cols(); }
};

struct Dims {
    std::size_t agents = 0;
    std::size_t n = 0;  // state dimension per agent
    std::size_t p = 0;  // input dimension per agent

    [[nodiscard]] std::size_t q() const noexcept { return 2 * n + p; }
    [[nodiscard]] std::size_t states() const noexcept { return agents * n; }
    [[nodiscard]] std::size_t inputs() const noexcept { return agents * p; }
};

[[nodiscard]] inline Dims check_dims(const Fleet& fleet, const LeaderModel& leader) {
    const std::size_t n = leader.a_m.rows();
    const std::size_t p = leader.b_m.cols();
    if (!leader.a_m.is_square() || leader.b_m.rows() != n || n == 0 || p == 0) {
        throw Error(ErrorKind::DimensionMismatch, "leader matrices");
    }
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        const auto& ag = fleet[i];
        if (ag.a.rows() != n || ag.a.cols() != n || ag.a_zeta.rows() != n || ag.a_zeta.cols() != n ||
            ag.b.rows() != n || ag.b.cols() != p) {
            throw Error(ErrorKind::DimensionMismatch, "agent " + std::to_string(i + 1) + " matrices");
        }
    }
    return Dims{fleet.size(), n, p};
}

namespace detail {

// out[r] += Σ_c m(r, c)·x[c] over a block starting at `offset`.
inline void add_block_product(const Mat& m, const Vec& x, std::size_t x_offset, Vec& out, std::size_t out_offset) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * x[x_offset + c];
        out[out_offset + r] += acc;
    }
}

}  // namespace detail

/// 𝐀x̄ + 𝐀^ζ x̄(t−τ_x) + 𝐁ū(t−τ_u), block-wise.
[[nodiscard]] inline Vec agent_derivative(const Fleet& fleet, const Vec& x_now, const Vec& x_delayed,
                                          const Vec& u_delayed) {
    if (fleet.empty()) throw Error(ErrorKind::DimensionMismatch, "empty fleet");
    const std::size_t n = fleet.front().a.rows();
    const std::size_t p = fleet.front().b.cols();
    const std::size_t l = fleet.size();
    if (x_now.size() != l * n || x_delayed.size() != l * n || u_delayed.size() != l * p) {
        throw Error(ErrorKind::DimensionMismatch, "agent_derivative argument sizes");
    }
    Vec dx(l * n);
    for (std::size_t i = 0; i < l; ++i) {
        const auto& ag = fleet[i];
        if (ag.a.rows() != n || ag.a.cols() != n || ag.a_zeta.rows() != n || ag.a_zeta.cols() != n ||
            ag.b.rows() != n || ag.b.cols() != p) {
            throw Error(ErrorKind::DimensionMismatch, "agent " + std::to_string(i + 1) + " matrices");
        }
        detail::add_block_product(ag.a, x_now, i * n, dx, i * n);
        detail::add_block_product(ag.a_zeta, x_delayed, i * n, dx, i * n);
        detail::add_block_product(ag.b, u_delayed, i * p, dx, i * n);
    }
    return dx;
}

/// (I_ℓ⊗A_m)x̄_m + (I_ℓ⊗B_m)r̄(t−τ_u), block-wise.
[[nodiscard]] inline Vec leader_derivative(const LeaderModel& m, const Vec& x_m, const Vec& r_delayed) {
    const std::size_t n = m.state_dim();
    const std::size_t p = m.input_dim();
    if (n == 0 || x_m.size() % n != 0 || r_delayed.size() * n != x_m.size() * p) {
        throw Error(ErrorKind::DimensionMismatch, "leader_derivative argument sizes");
    }
    const std::size_t l = x_m.size() / n;
    Vec dx(x_m.size());
    for (std::size_t i = 0; i < l; ++i) {
        detail::add_block_product(m.a_m, x_m, i * n, dx, i * n);
        detail::add_block_product(m.b_m, r_delayed, i * p, dx, i * n);
    }
    return dx;
}

/// 𝐀_m x̄_a + (𝕃_ℓ⊗I_n) 𝐁_m ū_a: auxiliary model driven by ū_a = Φ_φ φ.
[[nodiscard]] inline Vec aux_derivative(const LeaderModel& m, const TopologyMatrices& t, const Vec& x_a,
                                        const Vec& u_a) {
    const std::size_t n = m.state_dim();
    const std::size_t p = m.input_dim();
    const std::size_t l = t.num_agents();
    if (x_a.size() != l * n || u_a.size() != l * p) {
        throw Error(ErrorKind::DimensionMismatch, "aux_derivative argument sizes");
    }
    Vec bu(l * n);
    for (std::size_t j = 0; j < l; ++j) detail::add_block_product(m.b_m, u_a, j * p, bu, j * n);
    Vec dx(l * n);
    for (std::size_t i = 0; i < l; ++i) {
        detail::add_block_product(m.a_m, x_a, i * n, dx, i * n);
        for (std::size_t j = 0; j < l; ++j) {
            const double w = t.laplacian_like(i, j);
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) dx[i * n + k] += w * bu[j * n + k];
        }
    }
    return dx;
}

struct MatchingGains {
    std::vector<Mat> theta_x;     // n×p each
    std::vector<Mat> theta_zeta;  // n×p each
    std::vector<Mat> theta_r;     // p×p each
    std::vector<Mat> theta_phi;   // p×p each

    /// Θ^{i*} stacked as [θ_x; θ_ζ; θ_r], a q×p matrix.
    [[nodiscard]] Mat stacked(std::size_t i) const {
        const std::size_t n = theta_x[i].rows();
        const std::size_t p = theta_x[i].cols();
        Mat s(2 * n + p, p);
        s.set_block(0, 0, theta_x[i]);
        s.set_block(n, 0, theta_zeta[i]);
        s.set_block(2 * n, 0, theta_r[i]);
        return s;
    }
};

inline constexpr double kMatchingTolerance = 1e-9;

/// Least-squares solution of the matching conditions
///   A_i + B_i θ_xᵀ = A_m,  A_i^ζ + B_i θ_ζᵀ = 0,  B_i θ_r = B_m,  B_i = B_m θ_φ
/// with a hard residual gate.
[[nodiscard]] inline MatchingGains matching_gains(const Fleet& fleet, const LeaderModel& m) {
    (void)check_dims(fleet, m);
    MatchingGains g;
    const Mat bm_t = m.b_m.transpose();
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        const auto& ag = fleet[i];
        const Mat bt = ag.b.transpose();
        Mat tx_t, tz_t, tr, tphi;
        try {
            const Mat btb = bt * ag.b;
            tx_t = solve_linear(btb, bt * (m.a_m - ag.a));
            tz_t = solve_linear(btb, bt * (-1.0 * ag.a_zeta));
            tr = solve_linear(btb, bt * m.b_m);
            tphi = solve_linear(bm_t * m.b_m, bm_t * ag.b);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SingularMatrix) throw;
            throw Error(ErrorKind::NoMatchingSolution,
                        "agent " + std::to_string(i + 1) + ": input matrix lacks full column rank");
        }
        const double res = std::max({(ag.a + ag.b * tx_t - m.a_m).max_abs(), (ag.a_zeta + ag.b * tz_t).max_abs(),
                                     (ag.b * tr - m.b_m).max_abs(), (m.b_m * tphi - ag.b).max_abs()});
        if (res > kMatchingTolerance) {
            throw Error(ErrorKind::NoMatchingSolution,
                        "agent " + std::to_string(i + 1) + ": residual " + std::to_string(res));
        }
        g.theta_x.push_back(tx_t.transpose());
        g.theta_zeta.push_back(tz_t.transpose());
        g.theta_r.push_back(std::move(tr));
        g.theta_phi.push_back(std::move(tphi));
    }
    return g;
}

/// Certifies a_m Hurwitz: P from a_mᵀP + P a_m = −I must be positive definite.
inline void check_hurwitz(const Mat& a_m) {
    try {
        const Mat p = solve_lyapunov(a_m, Mat::identity(a_m.rows()));
        if (!is_positive_definite(p)) throw Error(ErrorKind::NotHurwitz, "Lyapunov solution is not positive definite");
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::SingularMatrix) throw Error(ErrorKind::NotHurwitz, e.detail());
        throw;
    }
}

}  // namespace dmrac
