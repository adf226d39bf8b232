#include <gtest/gtest.h>

#include <numbers>

#include "hfm/datagen.hpp"
#include "hfm/eval.hpp"
#include "hfm/reference_field.hpp"
#include "support/fd.hpp"

using namespace hfm;
using namespace hfm::testing;

namespace {

const SystemParams osc = HarmonicOscillator{1};

PhaseState osc_state(double x, double p) { return make_state(1, Vec::Constant(1, x), Vec::Constant(1, p), Vec::Ones(1)); }

Trajectory gravity_traj(std::uint64_t seed, long steps = 200) {
    Rng rng(seed);
    const SystemParams grav = Gravity{1, 0.05};
    return rollout(grav, vv_stepper(grav), random_cluster(Vec::Ones(5), 3, 1.0, 0.5, rng), 0.01, steps);
}

double vv_vs_exact(double dt, double horizon) {
    const long n = std::lround(horizon / dt);
    const Trajectory vv = rollout(osc, vv_stepper(osc), osc_state(1, 0), dt, n);
    return trajectory_mse(vv, exact_trajectory(osc, osc_state(1, 0), dt, n));
}

}  // namespace

TEST(TrajectoryMse, IdenticalIsZero) {
    const Trajectory t = gravity_traj(1);
    EXPECT_EQ(trajectory_mse(t, t), 0.0);
}

TEST(TrajectoryMse, ConstantShift) {
    const Trajectory t = gravity_traj(2);
    Trajectory shifted = t;
    const Vec3 c(0.1, -0.2, 0.3);
    for (auto& s : shifted.states)
        for (int i = 0; i < s.count(); ++i) s.position(i) += c;
    EXPECT_NEAR(trajectory_mse(shifted, t), c.squaredNorm(), 1e-14);
}

TEST(TrajectoryMse, DenseReferenceMatching) {
    const Trajectory coarse = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.1, 20);
    const Trajectory fine = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.001, 2000);
    const double mse = trajectory_mse(coarse, fine);
    EXPECT_GT(mse, 0.0);
    EXPECT_LT(mse, 1e-4);
    const Trajectory short_ref = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.001, 1500);
    EXPECT_THROW(trajectory_mse(coarse, short_ref), Error);
    const Trajectory offgrid = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.03, 67);
    EXPECT_THROW(trajectory_mse(coarse, offgrid), Error);
}

TEST(TrajectoryMse, HalvingTheStepGainsSixteen) {
    const double ratio = vv_vs_exact(0.1, 2 * std::numbers::pi) / vv_vs_exact(0.05, 2 * std::numbers::pi);
    EXPECT_GT(ratio, 14.0);
    EXPECT_LT(ratio, 18.0);
}

TEST(TrajectoryMse, FourthOrderSlope) {
    const std::vector<double> steps = {0.2, 0.1, 0.05, 0.025};
    // horizon that every step size divides
    const double horizon = 6.4;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double h : steps) {
        const double x = std::log(h), y = std::log(vv_vs_exact(h, horizon));
        sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double n = static_cast<double>(steps.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, 4.0, 0.3);
}

TEST(TrajectoryMse, DivergedPredictionScoresInfinity) {
    Trajectory t = gravity_traj(3, 10);
    t.status = RolloutStatus::left_box;
    EXPECT_TRUE(std::isinf(trajectory_mse(t, t)));
}

TEST(NormalizedRmsd, Examples) {
    const Trajectory ref = gravity_traj(4);
    const PosMom same = normalized_rmsd(ref.states.back(), ref);
    EXPECT_EQ(same.pos, 0.0);
    EXPECT_EQ(same.mom, 0.0);
    const PosMom start = normalized_rmsd(ref.states.front(), ref);
    EXPECT_GT(start.pos, 0.0);
    EXPECT_LE(start.pos, 1.0);
    EXPECT_LE(start.mom, 1.0);
    Trajectory single = ref;
    single.states.resize(1);
    EXPECT_THROW(normalized_rmsd(ref.states.back(), single), Error);
    Trajectory frozen = ref;
    for (auto& s : frozen.states) s = ref.states.front();
    EXPECT_THROW(normalized_rmsd(ref.states.back(), frozen), Error);
}

TEST(NormalizedRmsd, BruteForceRecomputation) {
    const FlowNet net = small_net(16, 1, 1, 5);
    const PhaseState s0 = osc_state(1.0, 0.5);
    PhaseState pred = s0;
    for (int k = 0; k < 20; ++k) pred = hfm_step(net, pred, 0.5);
    const Trajectory ref = rollout(osc, vv_stepper(osc), s0, 0.01, 1000);
    const PosMom got = normalized_rmsd(pred, ref);
    double path_x = 0, path_p = 0;
    for (std::size_t k = 1; k < ref.length(); ++k) {
        path_x += std::abs(ref.states[k].positions[0] - ref.states[k - 1].positions[0]);
        path_p += std::abs(ref.states[k].momenta[0] - ref.states[k - 1].momenta[0]);
    }
    EXPECT_NEAR(got.pos, std::abs(pred.positions[0] - ref.states.back().positions[0]) / path_x, 1e-12);
    EXPECT_NEAR(got.mom, std::abs(pred.momenta[0] - ref.states.back().momenta[0]) / path_p, 1e-12);
}

TEST(DistanceHistogram, SelfAndReversed) {
    const Trajectory t = gravity_traj(6);
    EXPECT_EQ(distance_hist_mae(t, t), 0.0);
    Trajectory reversed = t;
    std::reverse(reversed.states.begin(), reversed.states.end());
    EXPECT_LT(distance_hist_mae(t, reversed), 1e-12);
}

TEST(DistanceHistogram, DisjointDeltas) {
    auto pair_at = [](double d) {
        Trajectory t;
        t.system = Gravity{1, 0};
        t.timestep = 1;
        t.push(make_state(3, (Vec(6) << 0, 0, 0, d, 0, 0).finished(), Vec::Zero(6), Vec::Ones(2)), 0.0);
        return t;
    };
    const double mae = distance_hist_mae(pair_at(0.5), pair_at(1.5), 10, 2.0);
    EXPECT_NEAR(mae, 2.0, 1e-12);  // two unit-mass deltas in different bins
    const Vec h = distance_histogram(pair_at(0.5), 10, 2.0);
    EXPECT_NEAR(h.sum() * 0.2, 1.0, 1e-12);
}

TEST(DistanceHistogram, SymmetricAndRigidInvariant) {
    const Trajectory a = gravity_traj(7), b = gravity_traj(8);
    EXPECT_NEAR(distance_hist_mae(a, b, 50, 4.0), distance_hist_mae(b, a, 50, 4.0), 1e-14);
    Rng rng(9);
    const Mat3 r = random_rotation(rng);
    Trajectory moved = a;
    for (auto& s : moved.states) {
        s = rotate_state(s, r, Vec3::Zero());
        for (int i = 0; i < s.count(); ++i) s.position(i) += Vec3(3, -1, 2);
    }
    EXPECT_NEAR(distance_hist_mae(moved, b, 50, 4.0), distance_hist_mae(a, b, 50, 4.0), 1e-9);
}

TEST(Semigroup, Examples) {
    const OscillatorMeanField field;
    const PosMom zero = semigroup_error(field, osc_state(1, 0), 0.0);
    EXPECT_EQ(zero.pos + zero.mom, 0.0);
    const PosMom analytic = semigroup_error(field, osc_state(0.3, -1.2), 2.5);
    EXPECT_LT(analytic.pos + analytic.mom, 1e-10);
    const FlowNet net = small_net(16, 1, 1, 10);
    const PosMom measured = semigroup_error(net, osc_state(0.3, -1.2), net.max_timestep());
    EXPECT_TRUE(std::isfinite(measured.pos) && std::isfinite(measured.mom));
    EXPECT_GT(measured.pos + measured.mom, 0.0);
}

TEST(ConservationDrift, ExactFlowAndVerlet) {
    const Trajectory exact = exact_trajectory(osc, osc_state(1, 0.5), 0.1, 1000);
    EXPECT_LE(conservation_drift(exact).energy, 1e-12);
    const Trajectory vv = rollout(osc, vv_stepper(osc), osc_state(1, 0), 0.1, 10000);
    const double drift = conservation_drift(vv).energy;
    EXPECT_LT(drift, 0.01);
    Trajectory first_half = vv;
    first_half.diagnostics.resize(5001);
    EXPECT_LE(drift, 1.01 * conservation_drift(first_half).energy);
}

TEST(ConservationDrift, AbsoluteNearZeroEnergy) {
    Trajectory t;
    t.system = osc;
    t.push(osc_state(0, 0), 0.0);
    t.push(osc_state(0, 1e-3), 0.1);
    EXPECT_NEAR(conservation_drift(t).energy, 0.5e-6, 1e-18);
}
