#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "dmrac/errors.hpp"
#include "dmrac/numerics.hpp"

namespace dmrac {

/// Follower graph plus direct leader links.
/// follower_weights(i, j) = w_ij is the weight agent i gives to agent j;
/// leader_weights[i] = w_im.
struct Topology {
    std::size_t num_agents = 0;
    Mat follower_weights;
    std::vector<double> leader_weights;
    double threshold = 0.1;

    /// Structural invariants only (shapes, nonnegativity, zero diagonal).
    void check_structure() const {
        if (follower_weights.rows() != num_agents || follower_weights.cols() != num_agents ||
            leader_weights.size() != num_agents) {
            throw Error(ErrorKind::DimensionMismatch, "topology shapes do not match num_agents");
        }
        for (std::size_t i = 0; i < num_agents; ++i) {
            if (follower_weights(i, i) != 0.0) {
                throw Error(ErrorKind::ValidationError, "self-loop weight on agent " + std::to_string(i + 1));
            }
            if (!(leader_weights[i] >= 0.0)) {
                throw Error(ErrorKind::ValidationError, "negative leader weight on agent " + std::to_string(i + 1));
            }
            for (std::size_t j = 0; j < num_agents; ++j)
                if (!(follower_weights(i, j) >= 0.0)) {
                    throw Error(ErrorKind::ValidationError, "negative follower weight");
                }
        }
        if (!(threshold > 0.0)) throw Error(ErrorKind::ValidationError, "threshold must be positive");
    }
};

struct TopologyMatrices {
    Mat laplacian_like;   // 𝕃_ℓ = I − 𝔸_ℓ under balancedness
    Mat leader_diag;      // 𝔸_m
    Mat laplacian_lifted; // 𝕃_ℓ ⊗ I_n
    Mat leader_lifted;    // 𝔸_m ⊗ I_n
    std::size_t state_dim = 0;

    [[nodiscard]] std::size_t num_agents() const noexcept { return laplacian_like.rows(); }
};

inline constexpr double kBalanceTolerance = 1e-12;
inline constexpr double kZeroEigenvalue = 1e-10;

/// Lifts 𝕃_ℓ and 𝔸_m by ⊗ I_n. Does not check balancedness.
[[nodiscard]] inline TopologyMatrices lift_matrices(const Mat& laplacian_like, const Mat& leader_diag,
                                                    std::size_t state_dim) {
    const Mat eye = Mat::identity(state_dim);
    return TopologyMatrices{laplacian_like, leader_diag, kron(laplacian_like, eye), kron(leader_diag, eye),
                            state_dim};
}

[[nodiscard]] inline TopologyMatrices build_matrices(const Topology& topo, std::size_t state_dim) {
    topo.check_structure();
    const std::size_t l = topo.num_agents;
    Mat lap(l, l);
    Mat lead(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        double incoming = topo.leader_weights[i];
        for (std::size_t j = 0; j < l; ++j) {
            incoming += topo.follower_weights(i, j);
            lap(i, j) = -topo.follower_weights(i, j);
        }
        if (std::abs(incoming - 1.0) > kBalanceTolerance) {
            throw Error(ErrorKind::UnbalancedTopology, "incoming weights of agent " + std::to_string(i + 1) +
                                                           " sum to " + std::to_string(incoming));
        }
        // degree matrix is I_ℓ under balancedness
        lap(i, i) = 1.0;
        lead(i, i) = topo.leader_weights[i];
    }
    return lift_matrices(lap, lead, state_dim);
}

/// [(𝕃_ℓ − 𝔸_m) ⊗ I_n] 1 = 0 within 1e-12.
[[nodiscard]] inline bool check_balanced(const TopologyMatrices& m) {
    const Mat diff = m.laplacian_lifted - m.leader_lifted;
    const Vec ones(diff.cols(), 1.0);
    return (diff * ones).norm_inf() <= kBalanceTolerance;
}

struct ThresholdReport {
    double min_laplacian_eigenvalue = 0.0;  // smallest nonzero eigenvalue of (𝕃+𝕃ᵀ)/2
    double min_leader_weight = 0.0;         // smallest nonzero diagonal of 𝔸_m
    bool has_zero_leader_weight = false;
    bool pass = false;
};

[[nodiscard]] inline ThresholdReport check_threshold(const TopologyMatrices& m, double theta) {
    if (!(theta > 0.0)) throw Error(ErrorKind::ValidationError, "threshold must be positive");
    ThresholdReport rep;
    const Mat sym = 0.5 * (m.laplacian_like + m.laplacian_like.transpose());
    const Vec eig = symmetric_eigenvalues(sym);
    double min_eig = std::numeric_limits<double>::infinity();
    for (double e : eig)
        if (std::abs(e) >= kZeroEigenvalue) min_eig = std::min(min_eig, e);
    double min_lead = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m.leader_diag.rows(); ++i) {
        const double w = m.leader_diag(i, i);
        if (std::abs(w) < kZeroEigenvalue) {
            rep.has_zero_leader_weight = true;
        } else {
            min_lead = std::min(min_lead, w);
        }
    }
    rep.min_laplacian_eigenvalue = std::isfinite(min_eig) ? min_eig : 0.0;
    rep.min_leader_weight = std::isfinite(min_lead) ? min_lead : 0.0;
    rep.pass = std::isfinite(min_eig) && std::isfinite(min_lead) && min_eig >= theta && min_lead >= theta &&
               !rep.has_zero_leader_weight;
    return rep;
}

/// BFS from the leader over edges leader→i (w_im > 0) and j→i (w_ij > 0).
[[nodiscard]] inline bool leader_reachable(const Topology& topo) {
    const std::size_t l = topo.num_agents;
    std::vector<bool> seen(l, false);
    std::deque<std::size_t> frontier;
    for (std::size_t i = 0; i < l; ++i)
        if (topo.leader_weights[i] > 0.0) {
            seen[i] = true;
            frontier.push_back(i);
        }
    while (!frontier.empty()) {
        const std::size_t j = frontier.front();
        frontier.pop_front();
        for (std::size_t i = 0; i < l; ++i)
            if (!seen[i] && topo.follower_weights(i, j) > 0.0) {
                seen[i] = true;
                frontier.push_back(i);
            }
    }
    for (bool s : seen)
        if (!s) return false;
    return true;
}

}  // namespace dmrac
