#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <numbers>

#include "hfm/datagen.hpp"
#include "hfm/eval.hpp"
#include "hfm/reference_field.hpp"
#include "hfm/train.hpp"

using namespace hfm;

namespace {

const SystemParams osc = HarmonicOscillator{1};

PhaseState osc_state(double x, double p) { return make_state(1, Vec::Constant(1, x), Vec::Constant(1, p), Vec::Ones(1)); }

double max_energy_error(double dt, long steps) {
    const Trajectory t = rollout(osc, vv_stepper(osc), osc_state(1, 0), dt, steps);
    double worst = 0;
    for (const auto& d : t.diagnostics) worst = std::max(worst, std::abs(d.total_energy - 0.5));
    return worst;
}

}  // namespace

TEST(VelocityVerlet, OnePeriod) {
    PhaseState s = osc_state(1, 0);
    for (int k = 0; k < 628; ++k) s = vv_step(osc, s, 0.01);
    const PhaseState exact = exact_flow(osc, osc_state(1, 0), 6.28);
    EXPECT_NEAR(s.positions[0], 1.0, 1e-3);
    EXPECT_NEAR(s.momenta[0], 0.0, 1e-2);
    EXPECT_NEAR(s.momenta[0], exact.momenta[0], 1e-3);
}

TEST(VelocityVerlet, ZeroStepIsIdentity) {
    const PhaseState s = osc_state(0.3, -0.7);
    EXPECT_EQ(vv_step(osc, s, 0.0), s);
}

TEST(VelocityVerlet, EnergyErrorIsBoundedAndQuadratic) {
    const double c = max_energy_error(0.05, 20000) / (0.05 * 0.05);
    const double at_01 = max_energy_error(0.1, 10000);
    EXPECT_LE(at_01, 1.1 * c * 0.01);
    EXPECT_GE(at_01, 0.9 * c * 0.01);
    // no secular drift: the envelope over the second half is no larger than over the first
    const Trajectory t = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.1, 10000);
    double first = 0, second = 0;
    for (std::size_t k = 0; k < t.length(); ++k) {
        const double e = std::abs(t.diagnostics[k].total_energy - 0.5);
        (k < t.length() / 2 ? first : second) = std::max(k < t.length() / 2 ? first : second, e);
    }
    EXPECT_LE(second, 1.01 * first);
}

TEST(VelocityVerlet, TimeReversible) {
    Rng rng(1);
    const SystemParams grav = Gravity{1, 0.1};
    const PhaseState s0 = random_cluster(Vec::Ones(4), 3, 1.0, 0.5, rng);
    PhaseState s = s0;
    for (int k = 0; k < 200; ++k) s = vv_step(grav, s, 0.01);
    s.momenta = -s.momenta;
    for (int k = 0; k < 200; ++k) s = vv_step(grav, s, 0.01);
    s.momenta = -s.momenta;
    EXPECT_LT((s.positions - s0.positions).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((s.momenta - s0.momenta).cwiseAbs().maxCoeff(), 1e-10);
    for (const SystemParams& sys : {SystemParams{Barbanis{}}, SystemParams{SpringPendulum{}}}) {
        const PhaseState b0 = make_state(2, Vec::Constant(2, 0.3), Vec::Constant(2, -0.4), Vec::Ones(1));
        PhaseState b = b0;
        for (int k = 0; k < 500; ++k) b = vv_step(sys, b, 0.01);
        b.momenta = -b.momenta;
        for (int k = 0; k < 500; ++k) b = vv_step(sys, b, 0.01);
        EXPECT_LT((b.positions - b0.positions).norm() + (b.momenta + b0.momenta).norm(), 1e-10);
    }
}

TEST(HfmStep, ZeroStepIsIdentity) {
    const OscillatorMeanField field;
    const PhaseState s = osc_state(0.3, 0.4);
    EXPECT_EQ(hfm_step(field, s, 0.0), s);
}

TEST(HfmStep, AnalyticFieldQuarterTurn) {
    const OscillatorMeanField field;
    const PhaseState out = hfm_step(field, osc_state(1, 0), std::numbers::pi / 2);
    EXPECT_NEAR(out.positions[0], 0.0, 1e-12);
    EXPECT_NEAR(out.momenta[0], -1.0, 1e-12);
}

TEST(HfmStep, BeyondHorizonIsError) {
    const OscillatorMeanField field(1.0, 2.5);
    EXPECT_THROW(hfm_step(field, osc_state(1, 0), 2.6), Error);
    EXPECT_THROW(hfm_step(field, osc_state(1, 0), -0.1), Error);
}

TEST(HfmStep, AnalyticSemigroup) {
    const OscillatorMeanField field;
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const PhaseState s = osc_state(rng.uniform(-2, 2), rng.uniform(-2, 2));
        const double dt = rng.uniform(0, 2.5);
        const PhaseState full = hfm_step(field, s, dt);
        const PhaseState half = hfm_step(field, hfm_step(field, s, dt / 2), dt / 2);
        EXPECT_LT((full.positions - half.positions).norm() + (full.momenta - half.momenta).norm(), 1e-10);
    }
}

TEST(HfmStep, TrainedOscillatorNetAtUnitStep) {
    Rng rng(3);
    std::vector<Sample> data;
    for (int i = 0; i < 4096; ++i)
        data.push_back(make_sample(osc, osc_state(rng.uniform(-2, 2), rng.uniform(-2, 2))));
    ArchConfig arch;
    arch.width = 64;
    Rng init(4);
    FlowNet net(arch, Vec::Ones(1), 1, 2.5, init);
    fit_normalization(net, data);
    AdamState adam;
    TrainConfig cfg;
    cfg.steps = 6000;
    cfg.lr_max = 2e-3;
    cfg.lr_min = 1e-6;
    TimestepDist dist;
    dist.max_timestep = 2.5;
    dist.q_zero = 0.25;
    train(data, net, adam, cfg, LossConfig{}, dist);
    const PhaseState out = hfm_step(net, osc_state(1, 0), 1.0);
    const PhaseState exact = exact_flow(osc, osc_state(1, 0), 1.0);
    EXPECT_LT(std::hypot(out.positions[0] - exact.positions[0], out.momenta[0] - exact.momenta[0]), 0.05);
}

TEST(Rollout, ZeroSteps) {
    const Trajectory t = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.1, 0);
    ASSERT_EQ(t.length(), 1u);
    EXPECT_EQ(t.states[0], osc_state(1, 0));
    EXPECT_EQ(t.status, RolloutStatus::completed);
}

TEST(Rollout, EqualsSequentialSteps) {
    Rng rng(5);
    const SystemParams grav = Gravity{1, 0.05};
    const PhaseState s0 = random_cluster(Vec::Ones(5), 3, 1.0, 0.5, rng);
    const Trajectory t = rollout(grav, vv_stepper(grav), s0, 0.01, 300);
    PhaseState s = s0;
    for (int k = 1; k <= 300; ++k) {
        s = vv_step(grav, s, 0.01);
        ASSERT_EQ(t.states[static_cast<std::size_t>(k)], s);
    }
}

TEST(Rollout, DiagnosticsArePureFunctionsOfStates) {
    Rng rng(6);
    const SystemParams grav = Gravity{1, 0.05};
    const Trajectory t =
        rollout(grav, vv_stepper(grav), random_cluster(Vec::Ones(4), 3, 1.0, 0.5, rng), 0.01, 100,
                FilterPipeline{{FilterKind::drift, FilterKind::conservation}, {}, {}});
    for (std::size_t k = 0; k < t.length(); ++k) {
        const Diagnostics d = diagnose(grav, t.states[k]);
        EXPECT_NEAR(d.total_energy, t.diagnostics[k].total_energy, 1e-12);
        EXPECT_LT((d.angular_momentum - t.diagnostics[k].angular_momentum).norm(), 1e-12);
        EXPECT_NEAR(t.times[k], 0.01 * static_cast<double>(k), 1e-15);
        if (k > 0) {
            EXPECT_GT(t.times[k], t.times[k - 1]);
        }
    }
}

TEST(Rollout, EarlyStopIsAStatus) {
    const StepFn explode = [](const PhaseState& s, double) {
        PhaseState out = s;
        out.positions *= 10.0;
        return out;
    };
    const Trajectory t = rollout(osc, explode, osc_state(1, 0), 0.1, 10);
    EXPECT_EQ(t.status, RolloutStatus::left_box);
    EXPECT_EQ(t.length(), 3u);  // 1, 10, 100; 1000 leaves the box
    const StepFn nan = [](const PhaseState& s, double) {
        PhaseState out = s;
        out.momenta[0] = std::numeric_limits<double>::quiet_NaN();
        return out;
    };
    const Trajectory u = rollout(osc, nan, osc_state(1, 0), 0.1, 10);
    EXPECT_EQ(u.status, RolloutStatus::non_finite);
    EXPECT_EQ(u.length(), 1u);
}

TEST(Rollout, GravityBridgeConvergesInStepCount) {
    const SystemParams grav = Gravity{1, 0.05};
    Rng rng(7);
    std::vector<double> mse(4, 0.0);
    const int count = 4;
    for (int c = 0; c < count; ++c) {
        Rng r = rng.split(static_cast<std::uint64_t>(c));
        const PhaseState at3 = evolve(grav, random_cluster(Vec::Ones(4), 3, 1.0, 0.5, r), 3.0, 1e-3);
        const Trajectory ref = rollout(grav, vv_stepper(grav), at3, 1e-3, 1000);
        int i = 0;
        for (int n : {10, 20, 50, 100}) {
            const Trajectory t = rollout(grav, vv_stepper(grav), at3, 1.0 / n, n);
            mse[static_cast<std::size_t>(i++)] += trajectory_mse(t, ref) / count;
        }
    }
    for (std::size_t i = 1; i < mse.size(); ++i) EXPECT_LT(mse[i], mse[i - 1]);
}

TEST(TrajectoryIo, BinaryRoundTripAndCsv) {
    Rng rng(8);
    const SystemParams grav = Gravity{1, 0.05};
    const Trajectory t =
        rollout(grav, vv_stepper(grav), random_cluster(Vec::Ones(3), 3, 1.0, 0.5, rng), 0.01, 20,
                FilterPipeline{{FilterKind::drift, FilterKind::conservation}, {}, {}});
    const std::string path = ::testing::TempDir() + "/traj.hfmt";
    write_trajectory(path, t);
    const Trajectory back = read_trajectory(path);
    EXPECT_EQ(back.system, t.system);
    ASSERT_EQ(back.length(), t.length());
    for (std::size_t k = 0; k < t.length(); ++k) {
        EXPECT_EQ(back.states[k], t.states[k]);
        EXPECT_EQ(back.diagnostics[k], t.diagnostics[k]);
        EXPECT_EQ(back.times[k], t.times[k]);
    }
    EXPECT_EQ(encode_trajectory(back).bytes(), encode_trajectory(t).bytes());
    const std::string csv = ::testing::TempDir() + "/traj.csv";
    write_trajectory_csv(csv, t);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("t,x0,", 0), 0u);
    EXPECT_NE(header.find("E_tot,E_kin,L_norm,P_norm,status,lambda,discriminant,fallback"), std::string::npos);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 21);
}
