#pragma once

// Fixed-step RK4 for delay differential equations (method of steps).
// Delayed signals live in uniform-grid ring buffers with linear
// interpolation; every delay must be an integer multiple of the step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dmrac/errors.hpp"
#include "dmrac/numerics.hpp"

namespace dmrac {

/// Relative tolerance used to snap query times onto the sample grid.
inline constexpr double kGridSnap = 1e-9;
/// Fraction of a step by which stage times are pulled off the grid; well above
/// kGridSnap so a nudged time never snaps back onto a grid point.
inline constexpr double kInteriorNudge = 1e-6;

class HistoryBuffer {
public:
    HistoryBuffer(double sample_period, double start_time, Vec pre_history, std::size_t capacity)
        : period_(sample_period), start_(start_time), pre_(std::move(pre_history)),
          capacity_(std::max<std::size_t>(capacity, 2)), ring_(capacity_ * pre_.size()) {
        if (!(period_ > 0.0)) throw Error(ErrorKind::ValidationError, "sample period must be positive");
    }

    /// Smallest capacity that can serve queries up to `max_delay` in the past,
    /// including the half-step RK4 stages.
    [[nodiscard]] static std::size_t capacity_for(double max_delay, double sample_period) {
        return static_cast<std::size_t>(std::ceil(max_delay / sample_period - kGridSnap)) + 2;
    }

    [[nodiscard]] double sample_period() const noexcept { return period_; }
    [[nodiscard]] double start_time() const noexcept { return start_; }
    [[nodiscard]] std::size_t dim() const noexcept { return pre_.size(); }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] const Vec& pre_history() const noexcept { return pre_; }
    /// Total number of samples ever pushed.
    [[nodiscard]] std::size_t count() const noexcept { return count_; }
    [[nodiscard]] std::size_t retained() const noexcept { return std::min(count_, capacity_); }
    [[nodiscard]] double latest_time() const noexcept {
        return start_ + static_cast<double>(count_) * period_ - period_;
    }
    [[nodiscard]] double oldest_retained_time() const noexcept {
        return start_ + static_cast<double>(count_ - retained()) * period_;
    }

    /// Appends the sample for time start_time + count()·h.
    void push(std::span<const double> v) {
        if (v.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "history sample dimension");
        std::copy(v.begin(), v.end(), ring_.begin() + static_cast<std::ptrdiff_t>((count_ % capacity_) * dim()));
        ++count_;
    }
    void push(const Vec& v) { push(v.span()); }

    /// Stored sample by global index (0 = start_time).
    [[nodiscard]] std::span<const double> at(std::size_t k) const {
        if (k >= count_ || k + capacity_ < count_) {
            throw Error(ErrorKind::HistoryExpired, "sample index " + std::to_string(k) + " not retained");
        }
        return {ring_.data() + (k % capacity_) * dim(), dim()};
    }

    void sample_into(double t, std::span<double> out) const {
        if (out.size() != dim()) throw Error(ErrorKind::DimensionMismatch, "history output dimension");
        if (t < start_ && !near_grid(t, 0)) {
            std::copy(pre_.begin(), pre_.end(), out.begin());
            return;
        }
        if (count_ == 0 || t > latest_time() + kGridSnap * period_) {
            std::ostringstream os;
            os << "query t=" << t << " beyond latest sample";
            throw Error(ErrorKind::FutureQuery, os.str());
        }
        const double u = (t - start_) / period_;
        const double k = std::round(u);
        if (std::abs(u - k) <= kGridSnap) {
            const auto s = at(static_cast<std::size_t>(std::max(k, 0.0)));
            std::copy(s.begin(), s.end(), out.begin());
            return;
        }
        const double k0 = std::floor(u);
        const double frac = u - k0;
        const auto a = at(static_cast<std::size_t>(k0));
        const auto b = at(static_cast<std::size_t>(k0) + 1);
        for (std::size_t i = 0; i < dim(); ++i) out[i] = a[i] + frac * (b[i] - a[i]);
    }

    [[nodiscard]] Vec sample(double t) const {
        Vec out(dim());
        sample_into(t, out.span());
        return out;
    }

private:
    [[nodiscard]] bool near_grid(double t, double k) const {
        return std::abs((t - start_) / period_ - k) <= kGridSnap;
    }

    double period_;
    double start_;
    Vec pre_;
    std::size_t capacity_;
    std::vector<double> ring_;
    std::size_t count_ = 0;
};

struct StateSlice {
    std::size_t offset = 0;
    std::size_t length = 0;
};

struct TrackedHistory {
    HistoryBuffer buffer;
    /// When set, the buffer is appended from this slice of the state after every step.
    std::optional<StateSlice> mirrors;
};

/// Stage time handed to the derivative. `interior()` nudges the stage time
/// into the open step interval so piecewise signals with breakpoints on the
/// grid are evaluated on the side that belongs to the current step.
struct StageTime {
    double t = 0.0;
    double step_begin = 0.0;
    double step_end = 0.0;

    [[nodiscard]] double interior() const noexcept {
        const double eps = kInteriorNudge * (step_end - step_begin);
        if (step_end <= step_begin) return t;
        return std::clamp(t, step_begin + eps, step_end - eps);
    }
};

class HistorySampler {
public:
    explicit HistorySampler(const std::map<std::string, TrackedHistory>& h) : histories_(&h) {}

    [[nodiscard]] const HistoryBuffer& buffer(const std::string& name) const {
        const auto it = histories_->find(name);
        if (it == histories_->end()) throw Error(ErrorKind::ValidationError, "unknown history '" + name + "'");
        return it->second.buffer;
    }
    [[nodiscard]] Vec sample(const std::string& name, double t) const { return buffer(name).sample(t); }

private:
    const std::map<std::string, TrackedHistory>* histories_;
};

struct DdeState {
    double start_time = 0.0;
    double step = 0.005;
    std::size_t step_index = 0;
    Vec state;
    std::map<std::string, TrackedHistory> histories;

    [[nodiscard]] double time() const noexcept { return start_time + static_cast<double>(step_index) * step; }

    /// Registers a history whose samples are copied from `slice` of the state
    /// after every step. The current slice value is stored as the first sample.
    void track_state(const std::string& name, StateSlice slice, Vec pre_history, double max_delay) {
        check_delay(max_delay);
        if (slice.offset + slice.length > state.size() || pre_history.size() != slice.length) {
            throw Error(ErrorKind::DimensionMismatch, "history slice for '" + name + "'");
        }
        HistoryBuffer buf(step, time(), std::move(pre_history), HistoryBuffer::capacity_for(max_delay, step));
        buf.push(std::span<const double>(state.data() + slice.offset, slice.length));
        histories.insert_or_assign(name, TrackedHistory{std::move(buf), slice});
    }

    /// Registers a history the caller appends to itself (e.g. recorded control).
    void track_external(const std::string& name, Vec pre_history, double max_delay) {
        check_delay(max_delay);
        HistoryBuffer buf(step, time(), std::move(pre_history), HistoryBuffer::capacity_for(max_delay, step));
        histories.insert_or_assign(name, TrackedHistory{std::move(buf), std::nullopt});
    }

    [[nodiscard]] HistoryBuffer& external(const std::string& name) {
        const auto it = histories.find(name);
        if (it == histories.end()) throw Error(ErrorKind::ValidationError, "unknown history '" + name + "'");
        return it->second.buffer;
    }

    void check_delay(double delay) const {
        if (!(step > 0.0)) throw Error(ErrorKind::ValidationError, "step must be positive");
        if (delay < 0.0) throw Error(ErrorKind::ValidationError, "negative delay");
        const double ratio = delay / step;
        if (std::abs(ratio - std::round(ratio)) > kGridSnap * std::max(1.0, ratio)) {
            std::ostringstream os;
            os << "delay " << delay << " is not a multiple of step " << step;
            throw Error(ErrorKind::ValidationError, os.str());
        }
    }
};

/// One classical RK4 step in place. `f(StageTime, state, HistorySampler)` -> Vec.
template <class Derivative>
void step_rk4(Derivative&& f, DdeState& s) {
    const double t = s.time();
    const double h = s.step;
    const StageTime begin{t, t, t + h};
    const StageTime mid{t + 0.5 * h, t, t + h};
    const StageTime end{t + h, t, t + h};
    const HistorySampler hist(s.histories);
    const Vec& y = s.state;
    const std::size_t n = y.size();

    auto shifted = [&](const Vec& k, double scale) {
        Vec out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + scale * k[i];
        return out;
    };
    const Vec k1 = f(begin, y, hist);
    const Vec k2 = f(mid, shifted(k1, 0.5 * h), hist);
    const Vec k3 = f(mid, shifted(k2, 0.5 * h), hist);
    const Vec k4 = f(end, shifted(k3, h), hist);
    if (k1.size() != n || k2.size() != n || k3.size() != n || k4.size() != n) {
        throw Error(ErrorKind::DimensionMismatch, "derivative returned wrong dimension");
    }
    Vec next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!next.all_finite()) throw Error(ErrorKind::NonFiniteState, "state became non-finite");

    s.state = std::move(next);
    ++s.step_index;
    for (auto& [name, tracked] : s.histories) {
        if (tracked.mirrors) {
            tracked.buffer.push(std::span<const double>(s.state.data() + tracked.mirrors->offset,
                                                        tracked.mirrors->length));
        }
    }
}

/// Steps until time() >= t_end − 1e-9, calling `observer(DdeState&)` after
/// each step (it may append to external histories). Errors are rethrown with the failing time attached.
template <class Derivative, class Observer>
DdeState run(Derivative&& f, DdeState s, double t_end, Observer&& observer) {
    if (t_end < s.time() - kGridSnap) throw Error(ErrorKind::ValidationError, "t_end precedes initial time");
    while (s.time() < t_end - 1e-9) {
        try {
            step_rk4(f, s);
            observer(s);
        } catch (const Error& e) {
            std::ostringstream os;
            os << e.detail() << " (at t=" << s.time() << ")";
            throw Error(e.kind(), os.str());
        }
    }
    return s;
}

template <class Derivative>
DdeState run(Derivative&& f, DdeState s, double t_end) {
    return run(std::forward<Derivative>(f), std::move(s), t_end, [](const DdeState&) {});
}

}  // namespace dmrac
