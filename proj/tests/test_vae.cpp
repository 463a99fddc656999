#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace vlgpo;
using namespace vlgpo::testing;

namespace {

VaeConfig tiny_config() {
    return {.length = 5, .vocab_size = 4, .latent_dim = 3, .beta = 0.1, .epochs = 0, .batch_size = 8,
            .conv_channels = 3, .hidden = 8};
}

std::vector<Sequence> random_batch(std::size_t n, std::size_t d, std::size_t V, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sequence> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_sequence(rng, d, V));
    return out;
}

/// Data drawn around a few centroid sequences, easy to compress.
Dataset clustered_dataset(std::size_t n, std::size_t d, std::size_t V, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sequence> centres;
    for (int c = 0; c < 3; ++c) centres.push_back(random_sequence(rng, d, V));
    std::uniform_int_distribution<std::size_t> pick(0, 2), pos(0, d - 1);
    std::uniform_int_distribution<int> tok(0, static_cast<int>(V) - 1);
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        Sequence s = centres[pick(rng)];
        s[pos(rng)] = static_cast<Token>(tok(rng));
        data.records.push_back({s, static_cast<double>(i)});
    }
    data.y_min = 0;
    data.y_max = static_cast<double>(n);
    return data;
}

}  // namespace

TEST(Kl, ClosedFormValues) {
    const std::vector<double> zero{0.0, 0.0}, one{1.0}, lv0{0.0};
    EXPECT_EQ(kl_to_standard_normal(zero, zero), 0.0);
    EXPECT_DOUBLE_EQ(kl_to_standard_normal(one, lv0), 0.5);
    const std::vector<double> m{0.3}, lv{std::log(0.25)};
    EXPECT_NEAR(kl_to_standard_normal(m, lv), 0.5 * (0.09 + 0.25 - 1.0 - std::log(0.25)), 1e-15);
}

TEST(Reparameterize, MeanPlusStdTimesNoise) {
    EncoderOutput e{{1.0, -2.0}, {0.0, std::log(4.0)}};
    const std::vector<double> eps{0.5, -1.0};
    const auto z = reparameterize(e, eps);
    EXPECT_DOUBLE_EQ(z[0], 1.5);
    EXPECT_DOUBLE_EQ(z[1], -4.0);
}

TEST(Vae, UniformDecoderGivesLogVocabularyCrossEntropy) {
    VaeModel m(tiny_config(), 3);
    for (auto& p : m.decoder().params().params()) std::fill(p.values.begin(), p.values.end(), 0.0);
    const auto batch = random_batch(6, 5, 4, 1);
    const auto loss = vae_loss(m, batch, Matrix(6, 3));
    EXPECT_NEAR(loss.reconstruction, std::log(4.0), 1e-12);
    EXPECT_NEAR(loss.total, loss.reconstruction + 0.1 * loss.kl, 1e-12);
}

TEST(Vae, LossGradientMatchesFiniteDifferences) {
    VaeModel m(tiny_config(), 5);
    const auto batch = random_batch(4, 5, 4, 2);
    const auto noise = random_matrix(4, 3, 9);
    VaeGradients g{m.encoder().params().zeros_like(), m.decoder().params().zeros_like()};
    vae_loss(m, batch, noise, &g);
    auto f = [&] { return vae_loss(m, batch, noise).total; };
    for (std::size_t p = 0; p < m.encoder().params().count(); ++p) {
        auto fd = central_differences(m.encoder().params()[p].values, f);
        EXPECT_LT(relative_error(g.encoder[p].values, fd), 1e-4) << "encoder " << m.encoder().params()[p].name;
    }
    for (std::size_t p = 0; p < m.decoder().params().count(); ++p) {
        auto fd = central_differences(m.decoder().params()[p].values, f);
        EXPECT_LT(relative_error(g.decoder[p].values, fd), 1e-4) << "decoder " << m.decoder().params()[p].name;
    }
}

TEST(Vae, DecoderInputGradientFiniteInSixSigmaBall) {
    VaeModel m(tiny_config(), 6);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto z = standard_normal(rng, 3);
        double norm = 0.0;
        for (double v : z) norm += v * v;
        const double radius = 6.0 * (trial + 1) / 50.0;
        for (auto& v : z) v *= radius / std::sqrt(norm);
        Tape tape;
        const auto logits = m.decoder().forward(Matrix::row_vector(z), tape);
        const auto dz = m.decoder().backward(tape, random_matrix(1, logits.cols(), trial));
        EXPECT_TRUE(dz.all_finite());
    }
}

TEST(Vae, DecoderInputGradientMatchesFiniteDifferences) {
    VaeModel m(tiny_config(), 8);
    Matrix z = random_matrix(2, 3, 4);
    const Matrix w = random_matrix(2, 20, 5);
    auto f = [&] {
        const auto y = m.decode_logits(z);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
        return s;
    };
    Tape tape;
    m.decoder().forward(z, tape);
    const auto dz = m.decoder().backward(tape, w);
    EXPECT_LT(relative_error(dz.data(), central_differences(z.data(), f)), 1e-4);
}

TEST(Vae, LogVarianceIsBounded) {
    VaeModel m(tiny_config(), 2);
    for (auto& p : m.encoder().params().params())
        for (auto& v : p.values) v *= 1e4;
    const auto batch = random_batch(5, 5, 4, 7);
    const auto [mean, logvar] = m.encode_batch(one_hot_batch(batch, 4));
    for (double v : logvar.data()) {
        EXPECT_GE(v, -kLogVarianceBound);
        EXPECT_LE(v, kLogVarianceBound);
    }
}

TEST(Vae, EncodeIsDeterministicAndDecodeShapes) {
    VaeModel m(tiny_config(), 4);
    const auto s = random_batch(1, 5, 4, 1).front();
    const auto a = m.encode(s), b = m.encode(s);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.log_variance, b.log_variance);
    const auto logits = m.decode_logits(std::span<const double>(a.mean));
    EXPECT_EQ(logits.rows(), 5u);
    EXPECT_EQ(logits.cols(), 4u);
    EXPECT_EQ(m.decode_tokens(a.mean).size(), 5u);
    EXPECT_THROW(m.encode(Sequence(std::vector<Token>(3, 0))), ValidationError);
    EXPECT_THROW(m.decode_logits(Matrix(1, 4)), ValidationError);
}

TEST(Vae, UntrainedAccuracyNearChance) {
    auto data = clustered_dataset(200, 5, 4, 1);
    auto cfg = tiny_config();
    cfg.epochs = 0;
    const auto r = train_vae(data, cfg, 1);
    EXPECT_TRUE(r.report.epochs.empty());
    EXPECT_LT(r.report.train_accuracy, 0.6);
}

TEST(Vae, TrainingReducesLossReconstructsAndIsDeterministic) {
    auto data = clustered_dataset(300, 6, 4, 2);
    auto [train, holdout] = split_holdout(data, 0.2, 1);
    VaeConfig cfg{.length = 6, .vocab_size = 4, .latent_dim = 4, .beta = 0.01, .learning_rate = 3e-3, .epochs = 40,
                  .batch_size = 16, .conv_channels = 6, .hidden = 24};
    const auto r = train_vae(train, cfg, 3, &holdout);
    ASSERT_EQ(r.report.epochs.size(), 40u);
    EXPECT_GT(r.report.epochs.front().total, r.report.epochs.back().total);
    EXPECT_GT(r.report.train_accuracy, 0.9);
    ASSERT_TRUE(r.report.validation_accuracy.has_value());
    EXPECT_GT(*r.report.validation_accuracy, 0.85);

    Sequence a = train.records[0].sequence, b = a;
    b[0] = static_cast<Token>((b[0] + 1) % 4);
    EXPECT_NE(r.model.encode(a).mean, r.model.encode(b).mean);

    const auto again = train_vae(train, cfg, 3, &holdout);
    EXPECT_EQ(again.model.checksum(), r.model.checksum());
}

TEST(Vae, PriorSamplingDeterministic) {
    VaeModel m(tiny_config(), 4);
    const auto a = sample_vae_prior(m, 20, 9), b = sample_vae_prior(m, 20, 9);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 20u);
}

TEST(Vae, CheckpointRoundTrip) {
    VaeModel m(tiny_config(), 4);
    const auto back = VaeModel::from_checkpoint(m.to_checkpoint());
    EXPECT_EQ(back.checksum(), m.checksum());
    EXPECT_EQ(back.config().latent_dim, 3u);
    Checkpoint wrong = m.to_checkpoint();
    wrong.kind = "flow";
    EXPECT_THROW(VaeModel::from_checkpoint(wrong), ValidationError);
}

TEST(Vae, EncodeDatasetSampledVersusMean) {
    VaeModel m(tiny_config(), 4);
    auto data = clustered_dataset(10, 5, 4, 3);
    const auto mean = encode_dataset(m, data, 1, false);
    const auto s1 = encode_dataset(m, data, 1, true), s2 = encode_dataset(m, data, 1, true);
    EXPECT_EQ(s1, s2);
    EXPECT_FALSE(s1 == mean);
    const auto e = m.encode(data.records[3].sequence);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(mean(3, i), e.mean[i]);
}
