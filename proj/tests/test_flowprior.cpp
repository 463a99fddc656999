#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace vlgpo;
using namespace vlgpo::testing;

namespace {

FlowArchitecture small_arch(bool conditional = false) {
    return {.latent_dim = 3, .embedding_dim = 6, .max_frequency = 50.0, .hidden = 10, .depth = 2,
            .conditional = conditional};
}

}  // namespace

TEST(Embedding, GeometricSinCosPairs) {
    std::vector<double> out(8);
    sinusoidal_embedding(0.3, 8, 100.0, out);
    // Frequencies 1, 100^(1/3), 100^(2/3), 100.
    const double w[4] = {1.0, std::cbrt(100.0), std::cbrt(100.0) * std::cbrt(100.0), 100.0};
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(out[k], std::sin(w[k] * 0.3), 1e-12);
        EXPECT_NEAR(out[4 + k], std::cos(w[k] * 0.3), 1e-12);
    }
    std::vector<double> two(2);
    sinusoidal_embedding(0.7, 2, 100.0, two);
    EXPECT_DOUBLE_EQ(two[0], std::sin(0.7));
    EXPECT_DOUBLE_EQ(two[1], std::cos(0.7));
}

TEST(Interpolant, EndpointsAndMidpoint) {
    const std::vector<double> a{1.0, -2.0}, b{3.0, 4.0};
    EXPECT_EQ(interpolant(a, b, 0.0), a);
    EXPECT_EQ(interpolant(a, b, 1.0), b);
    const auto m = interpolant(a, b, 0.25);
    EXPECT_DOUBLE_EQ(m[0], 1.5);
    EXPECT_DOUBLE_EQ(m[1], -0.5);
    EXPECT_THROW(interpolant(a, b, 1.5), ValidationError);
    EXPECT_THROW(interpolant(a, b, -0.1), ValidationError);
    EXPECT_THROW(interpolant(a, std::vector<double>{1.0}, 0.5), ValidationError);
}

TEST(CfmLoss, ZeroVelocityGivesHalfMeanSquaredDisplacement) {
    FlowModel m(small_arch(), 1);
    for (auto& p : m.net().params().params()) std::fill(p.values.begin(), p.values.end(), 0.0);
    const auto z1 = random_matrix(5, 3, 1), z0 = random_matrix(5, 3, 2);
    const std::vector<double> t{0.0, 0.2, 0.5, 0.9, 1.0};
    double expect = 0.0;
    for (std::size_t i = 0; i < z1.size(); ++i) expect += std::pow(z1.data()[i] - z0.data()[i], 2);
    EXPECT_NEAR(cfm_loss(m, z1, z0, t), 0.5 * expect / 5.0, 1e-12);
}

TEST(CfmLoss, ParameterGradientMatchesFiniteDifferences) {
    for (bool conditional : {false, true}) {
        FlowModel m(small_arch(conditional), 3);
        const auto z1 = random_matrix(4, 3, 4), z0 = random_matrix(4, 3, 5);
        const std::vector<double> t{0.1, 0.4, 0.6, 0.95};
        std::vector<double> y;
        if (conditional) y = {0.2, 0.5, 0.7, 1.0};
        ParamStore g = m.net().params().zeros_like();
        cfm_loss(m, z1, z0, t, y, &g);
        for (std::size_t p = 0; p < g.count(); ++p) {
            auto fd = central_differences(m.net().params()[p].values, [&] { return cfm_loss(m, z1, z0, t, y); });
            EXPECT_LT(relative_error(g[p].values, fd), 1e-4) << m.net().params()[p].name;
        }
    }
}

TEST(CfmLoss, RejectsBadBatches) {
    FlowModel m(small_arch(), 1);
    const auto z = random_matrix(2, 3, 1);
    const std::vector<double> t{0.5, 0.5}, bad_t{0.5, 2.0};
    EXPECT_THROW(cfm_loss(m, z, random_matrix(3, 3, 2), t), ValidationError);
    EXPECT_THROW(cfm_loss(m, z, z, bad_t), ValidationError);
    EXPECT_THROW(cfm_loss(m, Matrix(0, 3), Matrix(0, 3), {}), ValidationError);
    EXPECT_THROW(cfm_loss(m, random_matrix(2, 4, 1), random_matrix(2, 4, 1), t), ValidationError);
}

TEST(Flow, VelocityVjpMatchesFiniteDifferences) {
    for (bool conditional : {false, true}) {
        FlowModel m(small_arch(conditional), 7);
        Matrix z = random_matrix(3, 3, 8);
        const Matrix w = random_matrix(3, 3, 9);
        const std::optional<double> y = conditional ? std::optional(0.6) : std::nullopt;
        auto f = [&] {
            const auto v = m.velocity(z, 0.35, y);
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += v.data()[i] * w.data()[i];
            return s;
        };
        Tape tape;
        m.velocity(z, 0.35, y, tape);
        const auto dz = m.velocity_vjp(tape, w);
        EXPECT_LT(relative_error(dz.data(), central_differences(z.data(), f)), 1e-4);
    }
}

TEST(Flow, ConditionMustMatchModelKind) {
    FlowModel plain(small_arch(), 1), cond(small_arch(true), 1);
    const auto z = random_matrix(2, 3, 1);
    EXPECT_THROW(plain.velocity(z, 0.5, 0.3), ValidationError);
    EXPECT_THROW(cond.velocity(z, 0.5), ValidationError);
    EXPECT_THROW(plain.velocity(random_matrix(2, 4, 1), 0.5), ValidationError);
    EXPECT_NO_THROW(cond.velocity(z, 0.5, 0.3));
    // Different conditions give different velocities.
    EXPECT_FALSE(cond.velocity(z, 0.5, 0.1) == cond.velocity(z, 0.5, 0.9));
    auto bad = small_arch();
    bad.embedding_dim = 5;
    EXPECT_THROW(FlowModel(bad, 1), ValidationError);
}

TEST(Euler, LinearDecayFollowsRecurrenceExactly) {
    auto field = [](const Matrix& z, double) {
        Matrix v = z;
        v *= -1.0;
        return v;
    };
    const auto z0 = random_matrix(4, 2, 1);
    for (std::size_t K : {1u, 4u, 32u}) {
        const auto traj = euler_integrate(field, z0, K);
        ASSERT_EQ(traj.states.size(), K + 1);
        const double dt = 1.0 / static_cast<double>(K);
        // Same recurrence evaluated independently: z <- z + dt * (-z).
        Matrix z = z0;
        for (std::size_t k = 0; k < K; ++k)
            for (auto& v : z.data()) v = v + dt * (-v);
        EXPECT_EQ(traj.final_state(), z);
    }
    const auto t32 = euler_integrate(field, z0, 32);
    for (std::size_t i = 0; i < z0.size(); ++i)
        EXPECT_NEAR(t32.final_state().data()[i] / z0.data()[i], std::exp(-1.0), 0.02 * std::exp(-1.0));
}

TEST(Euler, UsesGridTimesAndRejectsBadInput) {
    std::vector<double> seen;
    auto field = [&](const Matrix& z, double t) {
        seen.push_back(t);
        return Matrix(z.rows(), z.cols(), 1.0);
    };
    const auto traj = euler_integrate(field, Matrix(1, 1, 0.0), 4);
    EXPECT_EQ(seen, (std::vector<double>{0.0, 0.25, 0.5, 0.75}));
    EXPECT_DOUBLE_EQ(traj.final_state()(0, 0), 1.0);
    EXPECT_THROW(euler_integrate(field, Matrix(1, 1), 0), ValidationError);
    auto blowup = [](const Matrix& z, double) { return Matrix(z.rows(), z.cols(), std::numeric_limits<double>::infinity()); };
    EXPECT_THROW(euler_integrate(blowup, Matrix(1, 1), 3), DivergenceError);
}

TEST(Flow, ModelIntegrationMatchesManualSteps) {
    FlowModel m(small_arch(true), 2);
    const auto z0 = random_matrix(3, 3, 4);
    const auto traj = euler_integrate(m, z0, 5, 0.8);
    Matrix z = z0;
    for (int k = 0; k < 5; ++k) z = euler_step(flow_field(m, 0.8), z, k * 0.2, 0.2);
    EXPECT_EQ(traj.final_state(), z);
}

TEST(FlowTraining, LearnsShiftedGaussian) {
    Rng rng(1);
    Matrix data(2048, 2, standard_normal(rng, 4096));
    for (auto& v : data.data()) v = 3.0 + 0.5 * v;
    const FlowArchitecture arch{.latent_dim = 2, .embedding_dim = 8, .max_frequency = 20.0, .hidden = 32, .depth = 2};
    const auto r = train_flow(data, {.learning_rate = 3e-3, .batch_size = 128, .epochs = 60, .seed = 1}, arch);
    ASSERT_EQ(r.report.epoch_loss.size(), 60u);
    EXPECT_LT(r.report.epoch_loss.back(), 0.5 * r.report.epoch_loss.front());
    Rng r0(9);
    const auto out = euler_integrate(r.model, Matrix(1024, 2, standard_normal(r0, 2048)), 32).final_state();
    double mean = 0.0;
    for (double v : out.data()) mean += v;
    mean /= static_cast<double>(out.size());
    EXPECT_NEAR(mean, 3.0, 0.3);

    const auto again = train_flow(data, {.learning_rate = 3e-3, .batch_size = 128, .epochs = 60, .seed = 1}, arch);
    EXPECT_EQ(again.model.checksum(), r.model.checksum());
}

TEST(FlowTraining, ConditionalNeedsLabelsAndCheckpointKeepsFlag) {
    const auto z = random_matrix(10, 3, 1);
    FlowTrainConfig cfg{.epochs = 2};
    EXPECT_THROW(train_flow(z, cfg, small_arch(true)), ValidationError);
    EXPECT_THROW(train_flow(random_matrix(10, 2, 1), cfg, small_arch()), ValidationError);
    const std::vector<double> y(10, 0.5);
    const auto r = train_flow(z, y, cfg, small_arch(true));
    const auto back = FlowModel::from_checkpoint(r.model.to_checkpoint());
    EXPECT_TRUE(back.conditional());
    EXPECT_EQ(back.checksum(), r.model.checksum());
    auto c = r.model.to_checkpoint();
    c.kind = "vae";
    EXPECT_THROW(FlowModel::from_checkpoint(c), ValidationError);
}
