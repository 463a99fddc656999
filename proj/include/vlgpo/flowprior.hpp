#pragma once

// Conditional flow matching over VAE latents: straight-line interpolant, CFM regression
// objective, forward-Euler integration of the learned velocity field, and an optional
// fitness-conditioned velocity field v(z, t, y).

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "vlgpo/netcore.hpp"

namespace vlgpo {

/// Velocity network descriptor. Time (and, when conditional, fitness) enter through a
/// sinusoidal embedding concatenated to the latent.
struct FlowArchitecture {
    std::size_t latent_dim = 16;
    std::size_t embedding_dim = 16;
    double max_frequency = 100.0;
    std::size_t hidden = 128;
    std::size_t depth = 3;
    bool conditional = false;

    void validate() const {
        if (latent_dim < 1) throw ValidationError("flow: latent_dim must be >= 1");
        if (embedding_dim < 2 || embedding_dim % 2 != 0) throw ValidationError("flow: embedding_dim must be even >= 2");
        if (depth < 1 || hidden < 1) throw ValidationError("flow: depth and hidden must be >= 1");
        if (!(max_frequency >= 1.0)) throw ValidationError("flow: max_frequency must be >= 1");
    }

    std::size_t input_width() const { return latent_dim + embedding_dim * (conditional ? 2 : 1); }

    Architecture net_architecture() const {
        Architecture a{input_width(), {layers::dense(input_width(), hidden), layers::silu()}};
        for (std::size_t i = 1; i < depth; ++i) {
            a.layers.push_back(layers::dense(hidden, hidden));
            a.layers.push_back(layers::silu());
        }
        a.layers.push_back(layers::dense(hidden, latent_dim));
        return a;
    }
};

inline nlohmann::json to_json(const FlowArchitecture& a) {
    return {{"latent_dim", a.latent_dim}, {"embedding_dim", a.embedding_dim}, {"max_frequency", a.max_frequency},
            {"hidden", a.hidden},         {"depth", a.depth},                 {"conditional", a.conditional}};
}

inline FlowArchitecture flow_architecture_from_json(const nlohmann::json& j) {
    FlowArchitecture a;
    a.latent_dim = j.at("latent_dim");
    a.embedding_dim = j.at("embedding_dim");
    a.max_frequency = j.at("max_frequency");
    a.hidden = j.at("hidden");
    a.depth = j.at("depth");
    a.conditional = j.at("conditional");
    a.validate();
    return a;
}

/// [sin(w_k s), cos(w_k s)] with w_k geometric from 1 to max_frequency.
inline void sinusoidal_embedding(double s, std::size_t dim, double max_frequency, std::span<double> out) {
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double w = half == 1 ? 1.0 : std::pow(max_frequency, static_cast<double>(k) / static_cast<double>(half - 1));
        out[k] = std::sin(w * s);
        out[half + k] = std::cos(w * s);
    }
}

class FlowModel {
public:
    FlowModel(FlowArchitecture arch, std::uint64_t seed) : arch_(validated(arch)), net_(arch_.net_architecture(), seed) {}
    FlowModel(FlowArchitecture arch, Net net) : arch_(validated(arch)), net_(std::move(net)) {
        if (net_.input_width() != arch_.input_width() || net_.output_width() != arch_.latent_dim)
            throw ValidationError("flow: network shape does not match descriptor");
    }

    const FlowArchitecture& architecture() const { return arch_; }
    const Net& net() const { return net_; }
    Net& net() { return net_; }
    bool conditional() const { return arch_.conditional; }
    std::size_t latent_dim() const { return arch_.latent_dim; }

    /// Network input rows [z | emb(t) | emb(y)] with per-row t and (conditional) y.
    Matrix build_input(const Matrix& z, std::span<const double> t, std::span<const double> y) const {
        if (z.cols() != arch_.latent_dim)
            throw ValidationError("flow: latent dimension " + std::to_string(z.cols()) + ", expected " +
                                  std::to_string(arch_.latent_dim));
        if (t.size() != z.rows()) throw ValidationError("flow: one time value per row required");
        if (arch_.conditional && y.size() != z.rows()) throw ValidationError("flow: conditional model requires y per row");
        const auto l = arch_.latent_dim, E = arch_.embedding_dim;
        Matrix in(z.rows(), arch_.input_width());
        for (std::size_t b = 0; b < z.rows(); ++b) {
            auto row = in.row(b);
            std::copy(z.row(b).begin(), z.row(b).end(), row.begin());
            sinusoidal_embedding(t[b], E, arch_.max_frequency, row.subspan(l, E));
            if (arch_.conditional) sinusoidal_embedding(y[b], E, arch_.max_frequency, row.subspan(l + E, E));
        }
        return in;
    }

    Matrix velocity(const Matrix& z, std::span<const double> t, std::span<const double> y = {}) const {
        return net_.forward(build_input(z, t, y));
    }

    Matrix velocity(const Matrix& z, double t, std::optional<double> y = std::nullopt) const {
        std::vector<double> ts(z.rows(), t), ys(y ? z.rows() : 0, y.value_or(0.0));
        check_condition(y);
        return velocity(z, ts, ys);
    }

    Matrix velocity(const Matrix& z, double t, std::optional<double> y, Tape& tape) const {
        std::vector<double> ts(z.rows(), t), ys(y ? z.rows() : 0, y.value_or(0.0));
        check_condition(y);
        return net_.forward(build_input(z, ts, ys), tape);
    }

    /// d(loss)/dz from an adjoint on the velocity output (time/fitness embeddings are constants).
    Matrix velocity_vjp(const Tape& tape, Matrix adjoint, ParamStore* grads = nullptr) const {
        const Matrix din = net_.backward(tape, std::move(adjoint), grads);
        Matrix dz(din.rows(), arch_.latent_dim);
        for (std::size_t b = 0; b < din.rows(); ++b)
            std::copy_n(din.row(b).begin(), arch_.latent_dim, dz.row(b).begin());
        return dz;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint c;
        c.kind = "flow";
        c.metadata["descriptor"] = to_json(arch_);
        c.metadata["conditional"] = arch_.conditional;
        c.nets.emplace("velocity", net_);
        return c;
    }

    static FlowModel from_checkpoint(const Checkpoint& c) {
        if (c.kind != "flow") throw ValidationError("checkpoint kind '" + c.kind + "' is not a flow model");
        return FlowModel(flow_architecture_from_json(c.metadata.at("descriptor")), c.nets.at("velocity"));
    }

    std::string checksum() const { return checkpoint_checksum(to_checkpoint()); }

private:
    static FlowArchitecture validated(FlowArchitecture a) {
        a.validate();
        return a;
    }
    void check_condition(const std::optional<double>& y) const {
        if (arch_.conditional && !y) throw ValidationError("flow: conditional model requires a fitness condition");
        if (!arch_.conditional && y) throw ValidationError("flow: unconditional model does not take a fitness condition");
    }

    FlowArchitecture arch_;
    Net net_;
};

/// (1 - t) z0 + t z1
inline std::vector<double> interpolant(std::span<const double> z0, std::span<const double> z1, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("interpolant: t must lie in [0, 1]");
    if (z0.size() != z1.size()) throw ValidationError("interpolant: dimension mismatch");
    std::vector<double> out(z0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * z0[i] + t * z1[i];
    return out;
}

/// Mean over the batch of 0.5 * ||v(psi_t(z0), t[, y]) - (z1 - z0)||^2.
inline double cfm_loss(const FlowModel& model, const Matrix& z1, const Matrix& z0, std::span<const double> t,
                       std::span<const double> y = {}, ParamStore* grads = nullptr) {
    if (z1.rows() != z0.rows() || z1.cols() != z0.cols()) throw ValidationError("cfm_loss: batch shape mismatch");
    if (z1.rows() == 0) throw ValidationError("cfm_loss: empty batch");
    const std::size_t B = z1.rows(), l = z1.cols();
    Matrix zt(B, l);
    for (std::size_t b = 0; b < B; ++b) {
        if (!(t[b] >= 0.0 && t[b] <= 1.0)) throw ValidationError("cfm_loss: t must lie in [0, 1]");
        for (std::size_t i = 0; i < l; ++i) zt(b, i) = (1.0 - t[b]) * z0(b, i) + t[b] * z1(b, i);
    }
    Tape tape;
    const Matrix v = model.net().forward(model.build_input(zt, t, y), tape);
    Matrix diff = v;
    diff -= z1;
    diff += z0;
    double loss = 0.0;
    for (double e : diff.data()) loss += e * e;
    loss *= 0.5 / static_cast<double>(B);
    if (grads) {
        diff *= 1.0 / static_cast<double>(B);
        model.net().backward(tape, std::move(diff), grads);
    }
    return loss;
}

struct FlowTrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    std::size_t epochs = 600;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || batch_size < 1) throw ValidationError("flow training: invalid configuration");
    }
};

struct FlowTrainReport {
    std::vector<double> epoch_loss;
};

inline nlohmann::json to_json(const FlowTrainReport& r) { return {{"epoch_loss", r.epoch_loss}}; }

struct FlowTrainResult {
    FlowModel model;
    FlowTrainReport report;
};

/// Standard CFM training with fresh z0 ~ N(0, I) and t ~ U[0, 1] drawn for every item each epoch.
inline FlowTrainResult train_flow(const Matrix& latents, std::span<const double> labels, const FlowTrainConfig& cfg,
                                  const FlowArchitecture& arch) {
    cfg.validate();
    if (latents.rows() == 0) throw ValidationError("train_flow: no latents");
    if (latents.cols() != arch.latent_dim) throw ValidationError("train_flow: latent dimension mismatch");
    if (arch.conditional && labels.size() != latents.rows())
        throw ValidationError("train_flow: conditional training needs one label per latent");
    FlowModel model(arch, derive_seed(cfg.seed, 0));
    Adam opt(model.net().params(), {.learning_rate = cfg.learning_rate});
    Rng rng(derive_seed(cfg.seed, 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::size_t> order(latents.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    ParamStore grads = model.net().params().zeros_like();
    FlowTrainReport report;
    const std::size_t l = arch.latent_dim;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - start);
            Matrix z1(n, l);
            std::vector<double> t(n), y;
            for (std::size_t k = 0; k < n; ++k) {
                std::copy(latents.row(order[start + k]).begin(), latents.row(order[start + k]).end(), z1.row(k).begin());
                if (arch.conditional) y.push_back(labels[order[start + k]]);
            }
            Matrix z0(n, l, standard_normal(rng, n * l));
            for (auto& tv : t) tv = unif(rng);
            grads.set_zero();
            const double loss = cfm_loss(model, z1, z0, t, y, &grads);
            if (!std::isfinite(loss)) throw DivergenceError("train_flow: non-finite loss at epoch " + std::to_string(epoch));
            opt.step(model.net().params(), grads);
            sum += loss * static_cast<double>(n);
        }
        report.epoch_loss.push_back(sum / static_cast<double>(order.size()));
    }
    return {std::move(model), std::move(report)};
}

inline FlowTrainResult train_flow(const Matrix& latents, const FlowTrainConfig& cfg, const FlowArchitecture& arch) {
    return train_flow(latents, std::span<const double>{}, cfg, arch);
}

/// Velocity field of a flow model as a callable (z, t) -> v, with optional fixed condition y.
inline auto flow_field(const FlowModel& model, std::optional<double> y = std::nullopt) {
    return [&model, y](const Matrix& z, double t) { return model.velocity(z, t, y); };
}

/// z + dt * v(z, t)
template <class Field>
Matrix euler_step(const Field& field, const Matrix& z, double t, double dt) {
    Matrix v = field(z, t);
    Matrix out = z;
    out.add_scaled(v, dt);
    return out;
}

struct Trajectory {
    std::vector<Matrix> states;  // K + 1 states, states[k] at t = k / K
    const Matrix& final_state() const { return states.back(); }
};

/// Forward Euler on t = k / K, k = 0..K-1.
template <class Field>
Trajectory euler_integrate(const Field& field, const Matrix& z0, std::size_t K) {
    if (K < 1) throw ValidationError("euler_integrate: K must be >= 1");
    const double dt = 1.0 / static_cast<double>(K);
    Trajectory traj;
    traj.states.reserve(K + 1);
    traj.states.push_back(z0);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = static_cast<double>(k) * dt;
        Matrix next = euler_step(field, traj.states.back(), t, dt);
        if (!next.all_finite()) throw DivergenceError("euler_integrate: non-finite state at step " + std::to_string(k));
        traj.states.push_back(std::move(next));
    }
    return traj;
}

inline Trajectory euler_integrate(const FlowModel& model, const Matrix& z0, std::size_t K,
                                  std::optional<double> y = std::nullopt) {
    return euler_integrate(flow_field(model, y), z0, K);
}

}  // namespace vlgpo
