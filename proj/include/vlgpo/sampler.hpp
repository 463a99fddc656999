#pragma once

// Classifier-guided posterior sampling in the VAE latent space.
//
// Each chain starts at z0 ~ N(0, I) and takes K Euler steps of the flow prior. After every
// Euler step, J gradient steps on 0.5 * (g(D(z_hat_1)) - y)^2 pull the state towards the
// target fitness y, where z_hat_1 = z' + (1 - t - dt) v(z', t) is the one-shot extrapolation
// to the data end of the flow (manifold-constrained guidance). The gradient therefore flows
// through the predictor, the softmax-relaxed decoder and the velocity network.
//
// Ablations: `naive` differentiates g(D(z')) directly, `unconditional` takes no guidance
// steps, and `learned_posterior` integrates a fitness-conditioned flow at y without a predictor.

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vlgpo/flowprior.hpp"
#include "vlgpo/parallel.hpp"
#include "vlgpo/predictor.hpp"
#include "vlgpo/vae.hpp"

namespace vlgpo {

enum class GuidanceMode { manifold, naive, unconditional, learned_posterior };

inline const char* to_string(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::manifold: return "manifold";
        case GuidanceMode::naive: return "naive";
        case GuidanceMode::unconditional: return "unconditional";
        case GuidanceMode::learned_posterior: return "learned_posterior";
    }
    return "?";
}

inline GuidanceMode guidance_mode_from_string(const std::string& s) {
    for (auto m : {GuidanceMode::manifold, GuidanceMode::naive, GuidanceMode::unconditional, GuidanceMode::learned_posterior})
        if (s == to_string(m)) return m;
    throw ValidationError("invalid mode '" + s + "'; expected one of: manifold, naive, unconditional, learned_posterior");
}

/// `target` descends 0.5 (g - y)^2; `maximize` ascends 0.5 g^2.
enum class GuidanceObjective { target, maximize };

inline const char* to_string(GuidanceObjective o) { return o == GuidanceObjective::target ? "target" : "maximize"; }

inline GuidanceObjective guidance_objective_from_string(const std::string& s) {
    if (s == "target") return GuidanceObjective::target;
    if (s == "maximize") return GuidanceObjective::maximize;
    throw ValidationError("invalid guidance objective '" + s + "'; expected target or maximize");
}

struct SamplerConfig {
    std::size_t K = 32;
    std::size_t J = 10;
    double alpha = 2.0;
    double target_y = 1.0;
    std::size_t batch = 512;
    std::size_t top_k = 128;
    GuidanceMode mode = GuidanceMode::manifold;
    std::uint64_t seed = 0;
    GuidanceObjective objective = GuidanceObjective::target;
    /// Softmax temperature of the relaxed decoder output fed to the predictor during guidance.
    double temperature = 1.0;
    /// false: return every unique decode, unranked truncation skipped (raw prior analysis).
    bool apply_top_k = true;
    /// Per-step guidance strength hook (step index, t); empty means the constant `alpha`.
    std::function<double(std::size_t, double)> alpha_schedule;
    std::size_t workers = 1;

    double alpha_at(std::size_t k, double t) const { return alpha_schedule ? alpha_schedule(k, t) : alpha; }

    void validate() const {
        std::vector<std::string> issues;
        if (K < 1) issues.emplace_back("K must be >= 1");
        if (!(alpha >= 0.0)) issues.emplace_back("alpha must be >= 0");
        if (batch < 1) issues.emplace_back("batch must be >= 1");
        if (top_k < 1 || top_k > batch) issues.emplace_back("top_k must lie in [1, batch]");
        if (!(temperature > 0.0)) issues.emplace_back("temperature must be > 0");
        if (mode == GuidanceMode::unconditional && (alpha != 0.0 || J != 0))
            issues.emplace_back("mode unconditional requires alpha = 0 and J = 0");
        if (!issues.empty()) {
            std::string msg = "invalid sampler config:";
            for (const auto& i : issues) msg += " " + i + ";";
            throw ValidationError(msg);
        }
    }

    /// Copy switched to `m`; unconditional forces alpha = 0 and J = 0.
    SamplerConfig with_mode(GuidanceMode m) const {
        SamplerConfig c = *this;
        c.mode = m;
        if (m == GuidanceMode::unconditional) {
            c.alpha = 0.0;
            c.J = 0;
        }
        return c;
    }
};

inline nlohmann::json to_json(const SamplerConfig& c) {
    return {{"K", c.K},
            {"J", c.J},
            {"alpha", c.alpha},
            {"target_y", c.target_y},
            {"batch", c.batch},
            {"top_k", c.top_k},
            {"mode", to_string(c.mode)},
            {"seed", c.seed},
            {"objective", to_string(c.objective)},
            {"temperature", c.temperature},
            {"apply_top_k", c.apply_top_k},
            {"alpha_schedule", c.alpha_schedule ? "custom" : "constant"}};
}

/// Clean-endpoint estimate z' + (1 - t - dt) v(z', t); v is queried at the step's t.
inline Matrix estimate_z1(const FlowModel& flow, const Matrix& z_prime, double t, double dt) {
    const double coef = 1.0 - t - dt;
    if (std::abs(coef) < 1e-12) return z_prime;
    Matrix out = z_prime;
    out.add_scaled(flow.velocity(z_prime, t), coef);
    return out;
}

struct GuidanceOptions {
    GuidanceObjective objective = GuidanceObjective::target;
    double temperature = 1.0;
};

struct LikelihoodGradient {
    std::vector<double> loss;        // per row
    std::vector<double> prediction;  // g(softmax(D(.)))
    Matrix gradient;                 // d loss / d z'
};

/// Per-row guidance loss and its gradient with respect to z'. With `flow` set the loss is
/// evaluated at z_hat_1 (manifold constraint); with `flow` null it is evaluated at z' itself.
inline LikelihoodGradient likelihood_gradient(const FlowModel* flow, const VaeModel& vae, const PredictorModel& predictor,
                                              const Matrix& z_prime, double t, double dt, double target_y,
                                              const GuidanceOptions& opt = {}) {
    const std::size_t B = z_prime.rows(), V = vae.vocab_size();
    double coef = flow ? 1.0 - t - dt : 0.0;
    if (std::abs(coef) < 1e-12) coef = 0.0;

    Tape flow_tape, dec_tape, pred_tape;
    Matrix z_hat = z_prime;
    if (coef != 0.0) z_hat.add_scaled(flow->velocity(z_prime, t, std::nullopt, flow_tape), coef);
    Matrix logits = vae.decoder().forward(z_hat, dec_tape);
    if (opt.temperature != 1.0) logits *= 1.0 / opt.temperature;
    const Matrix probs = softmax_groups(logits, V);
    auto pred = predictor.forward(probs, pred_tape);

    LikelihoodGradient out;
    out.loss.resize(B);
    std::vector<double> dpred(B);
    for (std::size_t b = 0; b < B; ++b) {
        if (opt.objective == GuidanceObjective::target) {
            const double r = pred[b] - target_y;
            out.loss[b] = 0.5 * r * r;
            dpred[b] = r;
        } else {
            out.loss[b] = -0.5 * pred[b] * pred[b];
            dpred[b] = -pred[b];
        }
    }
    Matrix dprobs = predictor.backward(pred_tape, dpred);
    Matrix dlogits = softmax_groups_backward(probs, dprobs, V);
    if (opt.temperature != 1.0) dlogits *= 1.0 / opt.temperature;
    Matrix dz = vae.decoder().backward(dec_tape, std::move(dlogits));
    if (coef != 0.0) {
        Matrix through_flow = flow->velocity_vjp(flow_tape, dz);
        dz.add_scaled(through_flow, coef);
    }
    if (!dz.all_finite()) throw DivergenceError("guidance: non-finite likelihood gradient at t=" + std::to_string(t));
    out.prediction = std::move(pred);
    out.gradient = std::move(dz);
    return out;
}

/// z' <- z' - alpha * grad_{z'} 0.5 (g(D(z_hat_1)) - y)^2
inline Matrix guidance_step(const Matrix& z_prime, const FlowModel& flow, const VaeModel& vae,
                            const PredictorModel& predictor, double target_y, double alpha, double t, double dt,
                            const GuidanceOptions& opt = {}) {
    if (!(alpha >= 0.0)) throw ValidationError("guidance_step: alpha must be >= 0");
    if (alpha == 0.0) return z_prime;
    auto lg = likelihood_gradient(&flow, vae, predictor, z_prime, t, dt, target_y, opt);
    Matrix out = z_prime;
    out.add_scaled(lg.gradient, -alpha);
    return out;
}

/// Ablation without the extrapolation: the likelihood is evaluated at D(z') directly.
inline Matrix naive_guidance_step(const Matrix& z_prime, const VaeModel& vae, const PredictorModel& predictor,
                                  double target_y, double alpha, const GuidanceOptions& opt = {}) {
    if (!(alpha >= 0.0)) throw ValidationError("naive_guidance_step: alpha must be >= 0");
    if (alpha == 0.0) return z_prime;
    auto lg = likelihood_gradient(nullptr, vae, predictor, z_prime, 0.0, 0.0, target_y, opt);
    Matrix out = z_prime;
    out.add_scaled(lg.gradient, -alpha);
    return out;
}

struct RankedSequence {
    Sequence sequence;
    double score = 0.0;
    std::size_t chain = 0;  // first chain that produced it
};

/// Removes duplicates (first occurrence wins), then sorts by score descending with ties broken
/// by lexicographic token order.
inline std::vector<RankedSequence> dedup_and_rank(std::vector<RankedSequence> items) {
    std::unordered_set<Sequence, SequenceHash> seen;
    std::vector<RankedSequence> unique;
    unique.reserve(items.size());
    for (auto& it : items)
        if (seen.insert(it.sequence).second) unique.push_back(std::move(it));
    std::stable_sort(unique.begin(), unique.end(), [](const RankedSequence& a, const RankedSequence& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.sequence < b.sequence;
    });
    return unique;
}

struct ModelChecksums {
    std::string vae;
    std::string flow;
    std::string predictor;
};

struct SampleResult {
    std::vector<Sequence> sequences;        // unique, ranked, at most top_k
    std::vector<double> predictor_scores;   // hard one-hot predictor scores, descending
    Matrix raw_latents;                     // final z1 of every chain (batch x l)
    std::vector<Sequence> raw_sequences;    // argmax decode of every chain
    std::vector<std::uint64_t> chain_seeds;
    std::size_t unique_count = 0;
    bool shortfall = false;                 // fewer unique decodes than top_k
    SamplerConfig config;
    ModelChecksums checksums;
};

inline nlohmann::json to_json(const SampleResult& r, const Vocabulary& vocab) {
    nlohmann::json j;
    j["config"] = to_json(r.config);
    j["checksums"] = {{"vae", r.checksums.vae}, {"flow", r.checksums.flow}, {"predictor", r.checksums.predictor}};
    j["sequences"] = nlohmann::json::array();
    for (const auto& s : r.sequences) j["sequences"].push_back(detokenize(s, vocab));
    j["predictor_scores"] = r.predictor_scores;
    j["chain_seeds"] = r.chain_seeds;
    j["unique_count"] = r.unique_count;
    j["shortfall"] = r.shortfall;
    j["chain_seed_rule"] = "derive_seed(seed, chain_index)";
    return j;
}

inline constexpr std::size_t kSamplerChunk = 64;

/// Draws z0 for chain c from its own stream seeded with derive_seed(seed, c).
inline Matrix initial_latents(std::uint64_t seed, std::size_t batch, std::size_t latent_dim,
                              std::vector<std::uint64_t>* seeds = nullptr) {
    Matrix z0(batch, latent_dim);
    for (std::size_t c = 0; c < batch; ++c) {
        const auto s = derive_seed(seed, c);
        if (seeds) seeds->push_back(s);
        Rng rng(s);
        auto noise = standard_normal(rng, latent_dim);
        std::copy(noise.begin(), noise.end(), z0.row(c).begin());
    }
    return z0;
}

/// Runs one block of chains through the K-step guided integration.
inline Matrix integrate_chains(const SamplerConfig& cfg, const FlowModel& flow, const VaeModel& vae,
                               const PredictorModel& predictor, Matrix z) {
    const double dt = 1.0 / static_cast<double>(cfg.K);
    const GuidanceOptions opt{cfg.objective, cfg.temperature};
    std::optional<double> condition;
    if (cfg.mode == GuidanceMode::learned_posterior) condition = cfg.target_y;
    const auto field = flow_field(flow, condition);
    const bool guided = cfg.mode == GuidanceMode::manifold || cfg.mode == GuidanceMode::naive;
    for (std::size_t k = 0; k < cfg.K; ++k) {
        const double t = static_cast<double>(k) * dt;
        Matrix zp = euler_step(field, z, t, dt);
        if (guided) {
            const double a = cfg.alpha_at(k, t);
            for (std::size_t j = 0; j < cfg.J; ++j) {
                zp = cfg.mode == GuidanceMode::manifold
                         ? guidance_step(zp, flow, vae, predictor, cfg.target_y, a, t, dt, opt)
                         : naive_guidance_step(zp, vae, predictor, cfg.target_y, a, opt);
            }
        }
        if (!zp.all_finite()) throw DivergenceError("sampling: non-finite latent at step " + std::to_string(k));
        z = std::move(zp);
    }
    return z;
}

inline void check_model_stack(const FlowModel& flow, const VaeModel& vae, const PredictorModel& predictor,
                              GuidanceMode mode) {
    if (flow.latent_dim() != vae.latent_dim())
        throw ValidationError("flow latent dimension " + std::to_string(flow.latent_dim()) +
                              " does not match VAE latent dimension " + std::to_string(vae.latent_dim()));
    if (predictor.length() != vae.length() || predictor.vocab_size() != vae.vocab_size())
        throw ValidationError("predictor input shape does not match decoder output shape");
    if (mode == GuidanceMode::learned_posterior && !flow.conditional())
        throw ValidationError("mode learned_posterior requires a fitness-conditioned flow model");
    if (mode != GuidanceMode::learned_posterior && flow.conditional())
        throw ValidationError("mode " + std::string(to_string(mode)) + " requires an unconditional flow model");
    if ((mode == GuidanceMode::manifold || mode == GuidanceMode::naive) && !predictor.differentiable())
        throw ValidationError("guidance requires a differentiable predictor");
}

inline SampleResult vlgpo_sample(const SamplerConfig& cfg, const FlowModel& flow, const VaeModel& vae,
                                 const PredictorModel& predictor) {
    cfg.validate();
    check_model_stack(flow, vae, predictor, cfg.mode);
    SampleResult res;
    res.config = cfg;
    res.checksums = {vae.checksum(), flow.checksum(), predictor.checksum()};
    const Matrix z0 = initial_latents(cfg.seed, cfg.batch, vae.latent_dim(), &res.chain_seeds);

    res.raw_latents = Matrix(cfg.batch, vae.latent_dim());
    const std::size_t n_chunks = (cfg.batch + kSamplerChunk - 1) / kSamplerChunk;
    parallel_for(n_chunks, cfg.workers, [&](std::size_t c) {
        const std::size_t begin = c * kSamplerChunk;
        const std::size_t n = std::min(kSamplerChunk, cfg.batch - begin);
        Matrix z1 = integrate_chains(cfg, flow, vae, predictor, z0.slice_rows(begin, n));
        res.raw_latents.set_rows(begin, z1);
    });

    res.raw_sequences = vae.decode_tokens_batch(res.raw_latents);
    const auto scores = predictor.score_batch(res.raw_sequences);
    std::vector<RankedSequence> items;
    items.reserve(cfg.batch);
    for (std::size_t c = 0; c < cfg.batch; ++c) items.push_back({res.raw_sequences[c], scores[c], c});
    auto ranked = dedup_and_rank(std::move(items));
    res.unique_count = ranked.size();
    res.shortfall = cfg.apply_top_k && ranked.size() < cfg.top_k;
    const std::size_t keep = cfg.apply_top_k ? std::min(cfg.top_k, ranked.size()) : ranked.size();
    for (std::size_t i = 0; i < keep; ++i) {
        res.sequences.push_back(ranked[i].sequence);
        res.predictor_scores.push_back(ranked[i].score);
    }
    return res;
}

}  // namespace vlgpo
