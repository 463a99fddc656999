#pragma once

// Convolutional beta-VAE between discrete sequences and a continuous latent space.

#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "vlgpo/netcore.hpp"
#include "vlgpo/seqcore.hpp"

namespace vlgpo {

struct VaeConfig {
    std::size_t length = 20;
    std::size_t vocab_size = 20;
    std::size_t latent_dim = 16;
    double beta = 0.001;
    double learning_rate = 1e-3;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::size_t conv_channels = 16;
    std::size_t hidden = 64;
    std::size_t kernel = 3;

    void validate() const {
        if (latent_dim < 1) throw ValidationError("vae: latent_dim must be >= 1");
        if (latent_dim >= length * vocab_size) throw ValidationError("vae: latent_dim must be much smaller than d*|V|");
        if (!(beta > 0.0)) throw ValidationError("vae: beta must be > 0");
        if (!(learning_rate > 0.0)) throw ValidationError("vae: learning_rate must be > 0");
        if (batch_size < 1) throw ValidationError("vae: batch_size must be >= 1");
        if (length < 1 || vocab_size < 2) throw ValidationError("vae: invalid sequence shape");
    }
};

inline nlohmann::json to_json(const VaeConfig& c) {
    return {{"length", c.length},     {"vocab_size", c.vocab_size}, {"latent_dim", c.latent_dim},
            {"beta", c.beta},         {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"conv_channels", c.conv_channels}, {"hidden", c.hidden},
            {"kernel", c.kernel}};
}

inline VaeConfig vae_config_from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.length = j.at("length");
    c.vocab_size = j.at("vocab_size");
    c.latent_dim = j.at("latent_dim");
    c.beta = j.at("beta");
    c.learning_rate = j.at("learning_rate");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.conv_channels = j.at("conv_channels");
    c.hidden = j.at("hidden");
    c.kernel = j.at("kernel");
    return c;
}

struct EncoderOutput {
    std::vector<double> mean;
    std::vector<double> log_variance;
};

inline constexpr double kLogVarianceBound = 10.0;

/// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2): KL(N(mu, sigma^2) || N(0, I)).
inline double kl_to_standard_normal(std::span<const double> mean, std::span<const double> log_variance) {
    double kl = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i)
        kl += mean[i] * mean[i] + std::exp(log_variance[i]) - 1.0 - log_variance[i];
    return 0.5 * kl;
}

/// z = mean + exp(0.5 * log_variance) * noise
inline std::vector<double> reparameterize(const EncoderOutput& out, std::span<const double> noise) {
    if (noise.size() != out.mean.size()) throw ValidationError("reparameterize: noise dimension mismatch");
    std::vector<double> z(out.mean.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = out.mean[i] + std::exp(0.5 * out.log_variance[i]) * noise[i];
    return z;
}

class VaeModel {
public:
    VaeModel(VaeConfig cfg, std::uint64_t seed)
        : cfg_(validated(cfg)), encoder_(encoder_architecture(cfg_), derive_seed(seed, 0)),
          decoder_(decoder_architecture(cfg_), derive_seed(seed, 1)) {}

    VaeModel(VaeConfig cfg, Net encoder, Net decoder)
        : cfg_(validated(cfg)), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
        if (encoder_.input_width() != cfg_.length * cfg_.vocab_size || encoder_.output_width() != 2 * cfg_.latent_dim)
            throw ValidationError("vae: encoder shape does not match config");
        if (decoder_.input_width() != cfg_.latent_dim || decoder_.output_width() != cfg_.length * cfg_.vocab_size)
            throw ValidationError("vae: decoder shape does not match config");
    }

    static Architecture encoder_architecture(const VaeConfig& c) {
        const auto d = c.length, V = c.vocab_size, C = c.conv_channels;
        return {d * V,
                {layers::conv1d(d, V, C, c.kernel), layers::silu(), layers::conv1d(d, C, C, c.kernel), layers::silu(),
                 layers::dense(d * C, c.hidden), layers::silu(), layers::dense(c.hidden, 2 * c.latent_dim)}};
    }

    static Architecture decoder_architecture(const VaeConfig& c) {
        const auto d = c.length, V = c.vocab_size, C = c.conv_channels;
        return {c.latent_dim,
                {layers::dense(c.latent_dim, c.hidden), layers::silu(), layers::dense(c.hidden, d * C), layers::silu(),
                 layers::conv1d(d, C, C, c.kernel), layers::silu(), layers::conv1d(d, C, V, c.kernel)}};
    }

    const VaeConfig& config() const { return cfg_; }
    const Net& encoder() const { return encoder_; }
    const Net& decoder() const { return decoder_; }
    Net& encoder() { return encoder_; }
    Net& decoder() { return decoder_; }
    std::size_t latent_dim() const { return cfg_.latent_dim; }
    std::size_t length() const { return cfg_.length; }
    std::size_t vocab_size() const { return cfg_.vocab_size; }

    /// Splits raw encoder output into (mean, log_variance) with the soft bound 10*tanh(raw/10).
    std::pair<Matrix, Matrix> split_encoder_output(const Matrix& raw) const {
        const auto l = cfg_.latent_dim;
        Matrix mean(raw.rows(), l), logvar(raw.rows(), l);
        for (std::size_t b = 0; b < raw.rows(); ++b)
            for (std::size_t i = 0; i < l; ++i) {
                mean(b, i) = raw(b, i);
                logvar(b, i) = kLogVarianceBound * std::tanh(raw(b, l + i) / kLogVarianceBound);
            }
        return {std::move(mean), std::move(logvar)};
    }

    std::pair<Matrix, Matrix> encode_batch(const Matrix& one_hots) const {
        return split_encoder_output(encoder_.forward(one_hots));
    }

    EncoderOutput encode(const Sequence& seq) const {
        check_length(seq);
        const Sequence* p = &seq;
        auto [mean, logvar] = encode_batch(one_hot_batch(std::span(p, 1), cfg_.vocab_size));
        return {std::vector<double>(mean.row(0).begin(), mean.row(0).end()),
                std::vector<double>(logvar.row(0).begin(), logvar.row(0).end())};
    }

    /// Logits for a batch of latents: rows are flattened d x |V| matrices.
    Matrix decode_logits(const Matrix& z) const {
        if (z.cols() != cfg_.latent_dim)
            throw ValidationError("decode: latent dimension " + std::to_string(z.cols()) + ", expected " +
                                  std::to_string(cfg_.latent_dim));
        return decoder_.forward(z);
    }

    /// d x |V| logits of a single latent.
    Matrix decode_logits(std::span<const double> z) const {
        auto flat = decode_logits(Matrix::row_vector(z));
        return Matrix(cfg_.length, cfg_.vocab_size, std::move(flat.data()));
    }

    Sequence decode_tokens(std::span<const double> z) const {
        auto flat = decode_logits(Matrix::row_vector(z));
        return argmax_tokens(flat.row(0), cfg_.vocab_size);
    }

    std::vector<Sequence> decode_tokens_batch(const Matrix& z) const {
        auto logits = decode_logits(z);
        std::vector<Sequence> out;
        out.reserve(z.rows());
        for (std::size_t b = 0; b < z.rows(); ++b) out.push_back(argmax_tokens(logits.row(b), cfg_.vocab_size));
        return out;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint c;
        c.kind = "vae";
        c.metadata["config"] = to_json(cfg_);
        c.nets.emplace("encoder", encoder_);
        c.nets.emplace("decoder", decoder_);
        return c;
    }

    static VaeModel from_checkpoint(const Checkpoint& c) {
        if (c.kind != "vae") throw ValidationError("checkpoint kind '" + c.kind + "' is not a vae");
        return VaeModel(vae_config_from_json(c.metadata.at("config")), c.nets.at("encoder"), c.nets.at("decoder"));
    }

    std::string checksum() const { return checkpoint_checksum(to_checkpoint()); }

    void check_length(const Sequence& seq) const {
        if (seq.size() != cfg_.length)
            throw ValidationError("vae: sequence length " + std::to_string(seq.size()) + ", expected " +
                                  std::to_string(cfg_.length));
    }

private:
    static VaeConfig validated(VaeConfig c) {
        c.validate();
        return c;
    }

    VaeConfig cfg_;
    Net encoder_;
    Net decoder_;
};

struct VaeLoss {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
};

struct VaeGradients {
    ParamStore encoder;
    ParamStore decoder;
};

/// Weighted ELBO on a batch: mean per-position cross-entropy + beta * mean KL.
/// When `grads` is non-null, exact gradients are accumulated into it.
inline VaeLoss vae_loss(const VaeModel& model, std::span<const Sequence> batch, const Matrix& noise,
                        VaeGradients* grads = nullptr) {
    if (batch.empty()) throw ValidationError("vae_loss: empty batch");
    const auto& cfg = model.config();
    const std::size_t B = batch.size(), l = cfg.latent_dim, d = cfg.length, V = cfg.vocab_size;
    if (noise.rows() != B || noise.cols() != l) throw ValidationError("vae_loss: noise shape mismatch");
    for (const auto& s : batch) model.check_length(s);

    const Matrix x = one_hot_batch(batch, V);
    Tape enc_tape, dec_tape;
    const Matrix raw = model.encoder().forward(x, enc_tape);
    auto [mean, logvar] = model.split_encoder_output(raw);
    Matrix z(B, l);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < l; ++i) z(b, i) = mean(b, i) + std::exp(0.5 * logvar(b, i)) * noise(b, i);
    const Matrix logits = model.decoder().forward(z, dec_tape);
    const Matrix probs = softmax_groups(logits, V);

    VaeLoss loss;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < d; ++p) loss.reconstruction -= std::log(probs(b, p * V + batch[b][p]));
        loss.kl += kl_to_standard_normal(mean.row(b), logvar.row(b));
    }
    loss.reconstruction /= static_cast<double>(B * d);
    loss.kl /= static_cast<double>(B);
    loss.total = loss.reconstruction + cfg.beta * loss.kl;
    if (!std::isfinite(loss.total)) throw DivergenceError("vae_loss: non-finite loss");
    if (!grads) return loss;

    // d(recon)/d(logits) = (softmax - onehot) / (B d)
    Matrix dlogits = probs;
    dlogits -= x;
    dlogits *= 1.0 / static_cast<double>(B * d);
    const Matrix dz = model.decoder().backward(dec_tape, std::move(dlogits), &grads->decoder);

    Matrix draw(B, 2 * l);
    const double kl_scale = cfg.beta / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < l; ++i) {
            const double sigma = std::exp(0.5 * logvar(b, i));
            draw(b, i) = dz(b, i) + kl_scale * mean(b, i);
            const double dlogvar = dz(b, i) * 0.5 * sigma * noise(b, i) + kl_scale * 0.5 * (sigma * sigma - 1.0);
            const double th = std::tanh(raw(b, l + i) / kLogVarianceBound);
            draw(b, l + i) = dlogvar * (1.0 - th * th);
        }
    model.encoder().backward(enc_tape, std::move(draw), &grads->encoder);
    return loss;
}

/// Fraction of positions where argmax decoding of the posterior mean reproduces the input.
inline double reconstruction_accuracy(const VaeModel& model, const Dataset& data) {
    if (data.n() == 0) throw ValidationError("reconstruction_accuracy: empty dataset");
    const auto seqs = data.sequences();
    std::size_t correct = 0, total = 0;
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < seqs.size(); start += chunk) {
        const auto n = std::min(chunk, seqs.size() - start);
        std::span<const Sequence> part(seqs.data() + start, n);
        for (const auto& s : part) model.check_length(s);
        auto [mean, logvar] = model.encode_batch(one_hot_batch(part, model.vocab_size()));
        auto decoded = model.decode_tokens_batch(mean);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < part[b].size(); ++p, ++total) correct += decoded[b][p] == part[b][p];
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

inline std::vector<Sequence> sample_vae_prior(const VaeModel& model, std::size_t count, std::uint64_t seed) {
    if (count == 0) return {};
    Rng rng(seed);
    Matrix z(count, model.latent_dim(), standard_normal(rng, count * model.latent_dim()));
    return model.decode_tokens_batch(z);
}

/// Latents z = mean + sigma * eps for every record (one draw each), as flow training data.
inline Matrix encode_dataset(const VaeModel& model, const Dataset& data, std::uint64_t seed, bool sample = true) {
    const auto seqs = data.sequences();
    auto [mean, logvar] = model.encode_batch(one_hot_batch(seqs, model.vocab_size()));
    if (!sample) return mean;
    Rng rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t b = 0; b < mean.rows(); ++b)
        for (std::size_t i = 0; i < mean.cols(); ++i) mean(b, i) += std::exp(0.5 * logvar(b, i)) * normal(rng);
    return mean;
}

struct VaeTrainReport {
    std::vector<VaeLoss> epochs;
    double train_accuracy = 0.0;
    std::optional<double> validation_accuracy;
};

inline nlohmann::json to_json(const VaeTrainReport& r) {
    nlohmann::json j;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : r.epochs) j["epochs"].push_back({{"total", e.total}, {"reconstruction", e.reconstruction}, {"kl", e.kl}});
    j["train_accuracy"] = r.train_accuracy;
    if (r.validation_accuracy) j["validation_accuracy"] = *r.validation_accuracy;
    return j;
}

struct VaeTrainResult {
    VaeModel model;
    VaeTrainReport report;
};

inline VaeTrainResult train_vae(const Dataset& data, const VaeConfig& cfg, std::uint64_t seed,
                                const Dataset* validation = nullptr) {
    cfg.validate();
    if (data.n() == 0) throw ValidationError("train_vae: empty dataset");
    if (data.length() != cfg.length)
        throw ValidationError("train_vae: data length " + std::to_string(data.length()) + " does not match config " +
                              std::to_string(cfg.length));
    VaeModel model(cfg, seed);
    Adam enc_opt(model.encoder().params(), {.learning_rate = cfg.learning_rate});
    Adam dec_opt(model.decoder().params(), {.learning_rate = cfg.learning_rate});
    Rng rng(derive_seed(seed, 2));
    auto seqs = data.sequences();
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    VaeTrainReport report;
    VaeGradients grads{model.encoder().params().zeros_like(), model.decoder().params().zeros_like()};
    std::vector<Sequence> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        VaeLoss sum;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - start);
            batch.clear();
            for (std::size_t k = 0; k < n; ++k) batch.push_back(seqs[order[start + k]]);
            Matrix noise(n, cfg.latent_dim, standard_normal(rng, n * cfg.latent_dim));
            grads.encoder.set_zero();
            grads.decoder.set_zero();
            VaeLoss l;
            try {
                l = vae_loss(model, batch, noise, &grads);
            } catch (const DivergenceError& e) {
                throw DivergenceError("train_vae: epoch " + std::to_string(epoch) + ": " + e.what());
            }
            enc_opt.step(model.encoder().params(), grads.encoder);
            dec_opt.step(model.decoder().params(), grads.decoder);
            const double w = static_cast<double>(n);
            sum.total += w * l.total;
            sum.reconstruction += w * l.reconstruction;
            sum.kl += w * l.kl;
        }
        const double inv = 1.0 / static_cast<double>(order.size());
        report.epochs.push_back({sum.total * inv, sum.reconstruction * inv, sum.kl * inv});
    }
    report.train_accuracy = reconstruction_accuracy(model, data);
    if (validation && validation->n() > 0) report.validation_accuracy = reconstruction_accuracy(model, *validation);
    return {std::move(model), std::move(report)};
}

}  // namespace vlgpo
