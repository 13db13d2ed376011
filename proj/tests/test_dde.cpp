#include <gtest/gtest.h>

#include <cmath>

#include "dmrac/dde.hpp"

using namespace dmrac;

namespace {

// ẋ = −x(t−1) with x ≡ 1 before 0.
DdeState delayed_decay(double h) {
    DdeState s;
    s.step = h;
    s.state = Vec{1.0};
    s.track_state("x", StateSlice{0, 1}, Vec{1.0}, 1.0);
    return s;
}

Vec delayed_decay_rhs(const StageTime& st, const Vec&, const HistorySampler& hist) {
    return -hist.sample("x", st.t - 1.0);
}

// Method of steps: x = 1 − t on [0,1], t²/2 − 2t + 3/2 on [1,2].
double delayed_decay_exact(double t) { return t <= 1.0 ? 1.0 - t : 0.5 * t * t - 2.0 * t + 1.5; }

double value_at(const DdeState& s, double t_end) {
    return run(delayed_decay_rhs, s, t_end).state[0];
}

}  // namespace

TEST(HistoryBuffer, MidpointInterpolation) {
    HistoryBuffer b(0.1, 0.0, Vec{0.0}, 4);
    b.push(Vec{0.0});
    b.push(Vec{2.0});
    EXPECT_NEAR(b.sample(0.05)[0], 1.0, 1e-15);
}

TEST(HistoryBuffer, PreHistoryBeforeStart) {
    HistoryBuffer b(0.1, 0.0, Vec{7.0}, 4);
    b.push(Vec{1.0});
    EXPECT_EQ(b.sample(-5.0)[0], 7.0);
}

TEST(HistoryBuffer, InterpolatesSquareBetweenGridValues) {
    HistoryBuffer b(0.01, 0.0, Vec{0.0}, 8);
    for (double t : {0.0, 0.01, 0.02}) b.push(Vec{t * t});
    EXPECT_NEAR(b.sample(0.015)[0], (0.0001 + 0.0004) / 2.0, 1e-15);
}

TEST(HistoryBuffer, GridTimesAreBitExact) {
    HistoryBuffer b(0.005, 0.0, Vec{0.0}, 2000);
    std::vector<double> stored;
    for (int k = 0; k < 1500; ++k) {
        const double v = std::sin(0.37 * k) * std::exp(0.001 * k);
        stored.push_back(v);
        b.push(Vec{v});
    }
    for (int k = 0; k < 1500; ++k) EXPECT_EQ(b.sample(k * 0.005)[0], stored[static_cast<std::size_t>(k)]);
}

TEST(HistoryBuffer, FutureQueryRaises) {
    HistoryBuffer b(0.1, 0.0, Vec{0.0}, 4);
    b.push(Vec{1.0});
    b.push(Vec{2.0});
    EXPECT_NO_THROW((void)b.sample(0.1 + 1e-12));
    try {
        (void)b.sample(0.1 + 1e-6);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::FutureQuery);
    }
}

TEST(HistoryBuffer, ExpiredSampleRaises) {
    HistoryBuffer b(0.1, 0.0, Vec{0.0}, 3);
    for (int k = 0; k < 10; ++k) b.push(Vec{static_cast<double>(k)});
    EXPECT_EQ(b.sample(0.9)[0], 9.0);
    EXPECT_EQ(b.sample(0.7)[0], 7.0);
    try {
        (void)b.sample(0.2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::HistoryExpired);
    }
}

TEST(HistoryBuffer, RetainsEnoughForMaxDelay) {
    const double h = 0.005, tau = 5.0;
    HistoryBuffer b(h, 0.0, Vec{-1.0}, HistoryBuffer::capacity_for(tau, h));
    EXPECT_GE(b.capacity(), static_cast<std::size_t>(std::ceil(tau / h)) + 2);
    for (int k = 0; k <= 3000; ++k) {
        b.push(Vec{static_cast<double>(k)});
        const double now = k * h;
        // the deepest query an RK4 step can make: (now + h/2) − τ and now − τ
        if (now > tau) {
            EXPECT_NO_THROW((void)b.sample(now - tau));
            EXPECT_NE(b.sample(now - tau)[0], -1.0);
        }
    }
}

TEST(StepRk4, ZeroDerivativeKeepsState) {
    DdeState s;
    s.step = 0.1;
    s.state = Vec{3.0, 4.0};
    s = run([](const StageTime&, const Vec& y, const HistorySampler&) { return Vec(y.size()); }, s, 10.0);
    EXPECT_EQ(s.state, (Vec{3.0, 4.0}));
    EXPECT_EQ(s.step_index, 100u);
}

TEST(StepRk4, DelayedDecayFirstIntervalIsLinear) {
    EXPECT_NEAR(value_at(delayed_decay(0.1), 1.0), 0.0, 1e-6);
}

TEST(StepRk4, DelayedDecaySecondIntervalIsQuadratic) {
    EXPECT_NEAR(value_at(delayed_decay(0.1), 2.0), -0.5, 1e-5);
}

TEST(StepRk4, NonFiniteStateRaises) {
    DdeState s;
    s.step = 0.1;
    s.state = Vec{1.0};
    try {
        (void)run([](const StageTime&, const Vec&, const HistorySampler&) { return Vec{INFINITY}; }, s, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteState);
        EXPECT_NE(std::string(e.what()).find("at t="), std::string::npos);
    }
}

TEST(StepRk4, DelayNotOnGridRejected) {
    DdeState s;
    s.step = 0.3;
    s.state = Vec{1.0};
    EXPECT_THROW(s.track_state("x", StateSlice{0, 1}, Vec{1.0}, 1.0), Error);
}

TEST(Run, ExponentialDecay) {
    DdeState s;
    s.step = 0.001;
    s.state = Vec{1.0};
    s = run([](const StageTime&, const Vec& y, const HistorySampler&) { return -y; }, s, 1.0);
    EXPECT_NEAR(s.state[0], std::exp(-1.0), 1e-9);
    EXPECT_NEAR(s.time(), 1.0, 1e-12);
}

TEST(Run, EmptyRunNeverCallsObserver) {
    DdeState s;
    s.step = 0.1;
    s.state = Vec{1.0};
    int calls = 0;
    s = run([](const StageTime&, const Vec& y, const HistorySampler&) { return -y; }, s, 0.0,
            [&](DdeState&) { ++calls; });
    EXPECT_EQ(calls, 0);
    EXPECT_EQ(s.state[0], 1.0);
}

TEST(Run, ObserverCalledOncePerStep) {
    DdeState s;
    s.step = 0.1;
    s.state = Vec{1.0};
    int calls = 0;
    (void)run([](const StageTime&, const Vec& y, const HistorySampler&) { return -y; }, s, 1.0,
              [&](DdeState&) { ++calls; });
    EXPECT_EQ(calls, 10);
}

TEST(Run, DelayedDecayToTwo) { EXPECT_NEAR(value_at(delayed_decay(0.01), 2.0), -0.5, 1e-5); }

TEST(RunProperty, FourthOrderOnSmoothOde) {
    const auto err = [](double h) {
        DdeState s;
        s.step = h;
        s.state = Vec{1.0};
        s = run([](const StageTime&, const Vec& y, const HistorySampler&) { return -y; }, s, 1.0);
        return std::abs(s.state[0] - std::exp(-1.0));
    };
    EXPECT_GE(err(0.1) / err(0.05), 14.0);
    EXPECT_GE(err(0.05) / err(0.025), 14.0);
}

TEST(RunProperty, DelayedDecayExactAtTwoForEveryStep) {
    // Up to t=2 the solution is piecewise linear/quadratic with linear
    // history, which RK4 with linear interpolation reproduces exactly.
    for (double h : {0.1, 0.05, 0.01, 0.005}) {
        EXPECT_NEAR(value_at(delayed_decay(h), 2.0), delayed_decay_exact(2.0), 1e-12) << "h=" << h;
    }
}

TEST(RunProperty, DelayedDecaySecondOrderAtThree) {
    // On [2,3] the history is quadratic, so linear interpolation limits the
    // order to two: x(3) = −1/6.
    const auto err = [](double h) { return std::abs(value_at(delayed_decay(h), 3.0) + 1.0 / 6.0); };
    for (double h : {0.02, 0.01}) {
        EXPECT_GT(err(h), 1e-10);
        EXPECT_GE(err(h) / err(h / 2.0), 3.5) << "h=" << h;
    }
}

TEST(RunProperty, Determinism) {
    const auto traj = [] {
        DdeState s = delayed_decay(0.01);
        std::vector<double> out;
        (void)run(delayed_decay_rhs, s, 5.0, [&](DdeState& d) { out.push_back(d.state[0]); });
        return out;
    };
    EXPECT_EQ(traj(), traj());
}

TEST(StageTime, InteriorClampsIntoOpenStep) {
    const StageTime begin{1.0, 1.0, 1.1};
    const StageTime end{1.1, 1.0, 1.1};
    const StageTime mid{1.05, 1.0, 1.1};
    EXPECT_GT(begin.interior(), 1.0);
    EXPECT_LT(end.interior(), 1.1);
    EXPECT_EQ(mid.interior(), 1.05);
}
