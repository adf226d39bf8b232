#include <gtest/gtest.h>

#include "hfm/checkpoint.hpp"
#include "support/fd.hpp"

using namespace hfm;
using namespace hfm::testing;

TEST(FlowNet, SameSeedSameParameters) {
    Rng a(7), b(7);
    ArchConfig arch;
    arch.width = 16;
    const FlowNet n1(arch, Vec::Ones(2), 3, 0.1, a);
    const FlowNet n2(arch, Vec::Ones(2), 3, 0.1, b);
    EXPECT_EQ(n1.parameters(), n2.parameters());
    EXPECT_EQ(n1.frequencies(), n2.frequencies());
}

TEST(FlowNet, OutputShape) {
    Rng rng(1);
    ArchConfig arch;
    arch.width = 16;
    const FlowNet net(arch, Vec::Ones(1), 1, 2.5, rng);
    const MeanField u = evaluate(net, Vec::Ones(1), Vec::Zero(1), 0.3);
    EXPECT_EQ(u.v.size() + u.f.size(), 2);
    EXPECT_TRUE(u.v.allFinite() && u.f.allFinite());
}

TEST(FlowNet, ParameterCountClosedForm) {
    for (int width : {1, 4, 16, 33})
        for (int freq : {0, 3}) {
            Rng rng(2);
            ArchConfig arch;
            arch.width = width;
            arch.fourier_features = freq;
            const FlowNet net(arch, Vec::Ones(3), 2, 1.0, rng);
            const Eigen::Index h = width, e = 2 * arch.frequencies(), nd = 6;
            const Eigen::Index by_hand = (e * h + h) + (h * h + h) + 2 * ((nd * h + h) + (h * h + h)) +
                                         3 * (h * h + h) + 2 * ((h * h + h) + (h * nd + nd));
            EXPECT_EQ(net.parameter_count(), by_hand);
            EXPECT_EQ(FlowNet::expected_parameter_count(arch, 6), by_hand);
        }
}

TEST(FlowNet, DeterministicForward) {
    const FlowNet net = small_net(16, 3, 2, 3);
    Rng rng(4);
    const Mat x = random_mat(6, 5, rng), p = random_mat(6, 5, rng);
    const RowVec dt = random_row(5, rng, 0, 2.5);
    const FieldBatch a = net.forward(x, p, dt), b = net.forward(x, p, dt);
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.f, b.f);
    // batch columns do not interact
    const FieldBatch single = net.forward(x.col(2), p.col(2), dt.segment(2, 1));
    EXPECT_LT((single.v - a.v.col(2)).norm(), 1e-13);
}

TEST(FlowNet, ShapeMismatch) {
    const FlowNet net = small_net(8, 2, 2, 5);
    EXPECT_THROW(net.forward(Mat::Zero(3, 1), Mat::Zero(4, 1), RowVec::Zero(1)), Error);
    EXPECT_THROW(net.forward(Mat::Zero(4, 2), Mat::Zero(4, 2), RowVec::Zero(1)), Error);
}

TEST(FlowNet, TimestepPerturbation) {
    const FlowNet net = small_net(16, 1, 2, 6);
    Rng rng(7);
    const Vec x = random_mat(2, 1, rng), p = random_mat(2, 1, rng);
    const double t = 0.7, h = 1e-7;
    const MeanFieldTangent jt = evaluate_with_tangent(net, x, p, t, Vec::Zero(2), Vec::Zero(2), 1.0);
    const MeanField a = evaluate(net, x, p, t + h);
    const MeanField b = evaluate(net, x, p, t);
    const Vec predicted = h * jt.tangent.f;
    EXPECT_LT((a.f - b.f - predicted).norm(), 1e-3 * predicted.norm() + 1e-15);
}

class TangentOracle : public ::testing::TestWithParam<Activation> {};

TEST_P(TangentOracle, MatchesCentralDifferences) {
    const FlowNet net = small_net(16, 2, 3, 8, GetParam());
    Rng rng(9);
    const int n = 6;
    for (int probe = 0; probe < 30; ++probe) {
        const Mat x = random_mat(n, 1, rng), p = random_mat(n, 1, rng);
        const RowVec dt = random_row(1, rng, 0.0, 2.5);
        const Mat dx = random_mat(n, 1, rng), dp = random_mat(n, 1, rng);
        const RowVec ddt = random_row(1, rng, -1, 1);
        const auto pass = net.forward_tangent(x, p, dt, dx, dp, ddt);
        const double h = 1e-5;
        const FieldBatch up = net.forward(x + h * dx, p + h * dp, dt + h * ddt);
        const FieldBatch down = net.forward(x - h * dx, p - h * dp, dt - h * ddt);
        const Mat fd_v = (up.v - down.v) / (2 * h), fd_f = (up.f - down.f) / (2 * h);
        EXPECT_LE((pass.tangent.v - fd_v).norm(), 1e-5 * fd_v.norm() + 1e-9);
        EXPECT_LE((pass.tangent.f - fd_f).norm(), 1e-5 * fd_f.norm() + 1e-9);
        // primal identical to forward
        const FieldBatch plain = net.forward(x, p, dt);
        EXPECT_EQ(pass.primal.v, plain.v);
        EXPECT_EQ(pass.primal.f, plain.f);
    }
}

INSTANTIATE_TEST_SUITE_P(Activations, TangentOracle,
                         ::testing::Values(Activation::silu, Activation::gelu, Activation::tanh));

TEST(FlowNet, TangentLinearity) {
    const FlowNet net = small_net(16, 2, 2, 10);
    Rng rng(11);
    const Mat x = random_mat(4, 3, rng), p = random_mat(4, 3, rng);
    const RowVec dt = random_row(3, rng, 0, 2.5);
    const Mat ux = random_mat(4, 3, rng), up = random_mat(4, 3, rng), wx = random_mat(4, 3, rng),
              wp = random_mat(4, 3, rng);
    const RowVec ut = random_row(3, rng, -1, 1), wt = random_row(3, rng, -1, 1);
    const double a = 0.7, b = -1.3;
    const auto tu = net.forward_tangent(x, p, dt, ux, up, ut).tangent;
    const auto tw = net.forward_tangent(x, p, dt, wx, wp, wt).tangent;
    const auto tc = net.forward_tangent(x, p, dt, a * ux + b * wx, a * up + b * wp, a * ut + b * wt).tangent;
    EXPECT_LT((tc.v - (a * tu.v + b * tw.v)).norm(), 1e-12 * (1 + tc.v.norm()));
    EXPECT_LT((tc.f - (a * tu.f + b * tw.f)).norm(), 1e-12 * (1 + tc.f.norm()));
    const auto zero = net.forward_tangent(x, p, dt, Mat::Zero(4, 3), Mat::Zero(4, 3), RowVec::Zero(3)).tangent;
    EXPECT_EQ(zero.v.norm() + zero.f.norm(), 0.0);
}

TEST(FlowNet, ParameterGradientEveryEntry) {
    FlowNet net = small_net(4, 1, 2, 12);
    Rng rng(13);
    const Mat x = random_mat(2, 3, rng), p = random_mat(2, 3, rng);
    const RowVec dt = random_row(3, rng, 0, 2.5);
    const Mat cv = random_mat(2, 3, rng), cf = random_mat(2, 3, rng);
    const auto rec = net.forward_recorded(x, p, dt);
    const Vec grad = net.backward(rec.tape, cv, cf);
    const Vec theta = net.parameters();
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Vec t = theta;
        t[k] += h;
        net.set_parameters(t);
        const double up = pairing(net.forward(x, p, dt), cv, cf);
        t[k] -= 2 * h;
        net.set_parameters(t);
        const double down = pairing(net.forward(x, p, dt), cv, cf);
        const double fd = (up - down) / (2 * h);
        EXPECT_LE(std::abs(grad[k] - fd), 1e-5 * std::max(std::abs(fd), 1e-3)) << "parameter " << k;
    }
    net.set_parameters(theta);
}

TEST(FlowNet, GradientLinearInCotangent) {
    const FlowNet net = small_net(16, 2, 2, 14);
    Rng rng(15);
    const Mat x = random_mat(4, 4, rng), p = random_mat(4, 4, rng);
    const RowVec dt = random_row(4, rng, 0, 2.5);
    const auto rec = net.forward_recorded(x, p, dt);
    const Mat a = random_mat(4, 4, rng), b = random_mat(4, 4, rng), c = random_mat(4, 4, rng), d = random_mat(4, 4, rng);
    const Vec g1 = net.backward(rec.tape, a, b), g2 = net.backward(rec.tape, c, d);
    const Vec g = net.backward(rec.tape, 2 * a - c, 2 * b - d);
    EXPECT_LT((g - (2 * g1 - g2)).norm(), 1e-12 * g.norm());
    EXPECT_EQ(net.backward(rec.tape, Mat::Zero(4, 4), Mat::Zero(4, 4)).norm(), 0.0);
}

TEST(FlowNet, JvpVjpDuality) {
    for (bool skip : {true, false}) {
        const FlowNet net = small_net(16, 2, 3, 16, Activation::gelu, skip);
        Rng rng(17);
        const Mat x = random_mat(6, 4, rng), p = random_mat(6, 4, rng);
        const RowVec dt = random_row(4, rng, 0, 2.5);
        const Mat dx = random_mat(6, 4, rng), dp = random_mat(6, 4, rng);
        const RowVec ddt = random_row(4, rng, -1, 1);
        const Mat cv = random_mat(6, 4, rng), cf = random_mat(6, 4, rng);
        const auto pass = net.forward_tangent(x, p, dt, dx, dp, ddt);
        InputGradient ig;
        net.backward(pass.tape, cv, cf, &ig);
        const double lhs = pairing(pass.tangent, cv, cf);
        const double rhs = (ig.x.array() * dx.array()).sum() + (ig.p.array() * dp.array()).sum() + ig.dt.dot(ddt);
        EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST(FlowNet, VelocitySkipAtZeroWeights) {
    FlowNet net = small_net(8, 2, 1, 18);
    net.set_parameters(Vec::Zero(net.parameter_count()));
    Vec p(2);
    p << 1.0, 3.0;
    const MeanField u = evaluate(net, Vec::Zero(2), p, 1.0);
    EXPECT_NEAR(u.v[0], 1.0 / net.masses()[0], 1e-15);
    EXPECT_NEAR(u.v[1], 3.0 / net.masses()[1], 1e-15);
    EXPECT_EQ(u.f.norm(), 0.0);
}

TEST(FlowNet, FitNormalization) {
    Rng rng(19);
    ArchConfig arch;
    arch.width = 8;
    FlowNet net(arch, Vec::Ones(1), 2, 1.0, rng);
    Mat x = random_mat(2, 500, rng, 3.0);
    x.array() += 2.0;
    const Mat p = random_mat(2, 500, rng, 0.5), f = random_mat(2, 500, rng, 4.0);
    net.fit_normalization(x, p, p, f);
    const auto n = net.normalization();
    EXPECT_NEAR(n.x_shift[0], 2.0, 0.4);
    EXPECT_NEAR(1.0 / n.x_scale[0], 3.0, 0.3);
    EXPECT_NEAR(n.f_scale[1], 4.0, 0.4);
    EXPECT_NEAR(n.v_scale[1], n.f_scale[1], 1e-12);  // max_timestep 1, unit mass
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const FlowNet net = small_net(8, 2, 3, 20);
    AdamState adam = make_adam_state(net.parameter_count());
    adam.step = 17;
    adam.m.setConstant(0.25);
    adam.v.setConstant(0.5);
    const auto bytes = encode_checkpoint(net, &adam).bytes();
    io::Reader reader(bytes);
    const Checkpoint ck = decode_checkpoint(reader);
    ASSERT_TRUE(ck.optimizer.has_value());
    EXPECT_EQ(ck.optimizer->step, 17);
    EXPECT_EQ(encode_checkpoint(ck.net, &*ck.optimizer).bytes(), bytes);
    EXPECT_EQ(ck.net.parameters(), net.parameters());
    Rng rng(21);
    const Mat x = random_mat(6, 2, rng), p = random_mat(6, 2, rng);
    const RowVec dt = random_row(2, rng, 0, 2.5);
    EXPECT_EQ(ck.net.forward(x, p, dt).v, net.forward(x, p, dt).v);
}

TEST(Checkpoint, CorruptFileIsIoError) {
    const FlowNet net = small_net(4, 1, 1, 22);
    auto bytes = encode_checkpoint(net).bytes();
    bytes.resize(bytes.size() - 3);
    io::Reader reader(bytes);
    try {
        decode_checkpoint(reader);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}
