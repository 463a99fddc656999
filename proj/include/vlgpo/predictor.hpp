#pragma once

// Scalar fitness models over relaxed one-hot inputs: the guidance predictor, an optional
// smoothed variant and the evaluation oracle.

#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlgpo/netcore.hpp"
#include "vlgpo/seqcore.hpp"

namespace vlgpo {

enum class PredictorRole { predictor, smoothed, oracle };

inline const char* to_string(PredictorRole r) {
    switch (r) {
        case PredictorRole::predictor: return "predictor";
        case PredictorRole::smoothed: return "smoothed";
        case PredictorRole::oracle: return "oracle";
    }
    return "?";
}

inline PredictorRole predictor_role_from_string(const std::string& s) {
    if (s == "predictor") return PredictorRole::predictor;
    if (s == "smoothed") return PredictorRole::smoothed;
    if (s == "oracle") return PredictorRole::oracle;
    throw ValidationError("unknown predictor role '" + s + "'");
}

struct PredictorConfig {
    std::size_t length = 20;
    std::size_t vocab_size = 20;
    std::size_t channels = 16;
    std::size_t kernel = 5;
    std::size_t hidden = 64;
    double learning_rate = 1e-3;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;

    void validate() const {
        if (length < 1 || vocab_size < 2) throw ValidationError("predictor: invalid sequence shape");
        if (!(learning_rate > 0.0)) throw ValidationError("predictor: learning_rate must be > 0");
        if (batch_size < 1) throw ValidationError("predictor: batch_size must be >= 1");
    }

    Architecture architecture() const {
        return {length * vocab_size,
                {layers::conv1d(length, vocab_size, channels, kernel), layers::silu(),
                 layers::dense(length * channels, hidden), layers::silu(), layers::dense(hidden, 1)}};
    }
};

inline nlohmann::json to_json(const SyntheticLandscape& l) {
    nlohmann::json j;
    j["seed"] = l.seed();
    j["target"] = l.target_sequence().tokens;
    j["vocab_size"] = l.vocab_size();
    j["raw_min"] = l.raw_min();
    j["raw_max"] = l.raw_max();
    j["linear"] = nlohmann::json::array();
    for (const auto& [s, w] : l.linear_weights()) j["linear"].push_back({s.pos, s.tok, w});
    j["pairwise"] = nlohmann::json::array();
    for (const auto& p : l.pairwise_weights()) j["pairwise"].push_back({p.a.pos, p.a.tok, p.b.pos, p.b.tok, p.weight});
    return j;
}

inline SyntheticLandscape landscape_from_json(const nlohmann::json& j) {
    std::vector<std::pair<Site, double>> linear;
    for (const auto& e : j.at("linear")) linear.push_back({{e.at(0), e.at(1)}, e.at(2)});
    std::vector<PairTerm> pairs;
    for (const auto& e : j.at("pairwise")) pairs.push_back({{e.at(0), e.at(1)}, {e.at(2), e.at(3)}, e.at(4)});
    return SyntheticLandscape(j.at("seed"), Sequence(j.at("target").get<std::vector<Token>>()), j.at("vocab_size"),
                              std::move(linear), std::move(pairs), j.at("raw_min"), j.at("raw_max"));
}

/// g: relaxed one-hot (d x |V|) -> fitness. Either a network, whose output is mapped through
/// label_offset + label_scale * net(x), or an exact synthetic landscape (hard one-hot only).
class PredictorModel {
public:
    PredictorModel(Net net, std::size_t length, std::size_t vocab_size, PredictorRole role, double label_offset = 0.0,
                   double label_scale = 1.0)
        : net_(std::move(net)), length_(length), vocab_size_(vocab_size), role_(role), label_offset_(label_offset),
          label_scale_(label_scale) {
        if (net_->input_width() != length * vocab_size || net_->output_width() != 1)
            throw ValidationError("predictor: network must map d*|V| inputs to one output");
    }

    explicit PredictorModel(SyntheticLandscape landscape)
        : landscape_(std::move(landscape)), length_(landscape_->length()), vocab_size_(landscape_->vocab_size()),
          role_(PredictorRole::oracle) {}

    std::size_t length() const { return length_; }
    std::size_t vocab_size() const { return vocab_size_; }
    PredictorRole role() const { return role_; }
    bool differentiable() const { return net_.has_value(); }
    const Net& net() const {
        if (!net_) throw ValidationError("predictor: exact landscape oracle has no network");
        return *net_;
    }
    const std::optional<SyntheticLandscape>& landscape() const { return landscape_; }
    double label_offset() const { return label_offset_; }
    double label_scale() const { return label_scale_; }

    /// Prediction for one relaxed one-hot matrix; rows must be distributions.
    double predict_fitness(const Matrix& relaxed) const {
        validate_relaxed(relaxed);
        Matrix flat(1, relaxed.size(), relaxed.data());
        return predict_rows(flat).front();
    }

    /// Unchecked batch prediction over flattened rows.
    std::vector<double> predict_rows(const Matrix& flat) const {
        std::vector<double> out(flat.rows());
        if (landscape_) {
            for (std::size_t b = 0; b < flat.rows(); ++b) {
                auto seq = argmax_tokens(flat.row(b), vocab_size_);
                for (std::size_t k = 0; k < flat.cols(); ++k) {
                    const double v = flat(b, k);
                    if (v != 0.0 && v != 1.0)
                        throw ValidationError("exact landscape oracle accepts hard one-hot input only");
                }
                out[b] = synthetic_oracle(seq, *landscape_);
            }
            return out;
        }
        auto y = net_->forward(flat);
        for (std::size_t b = 0; b < flat.rows(); ++b) out[b] = label_offset_ + label_scale_ * y(b, 0);
        return out;
    }

    /// Forward with tape for gradient computation; returns predictions (label units).
    std::vector<double> forward(const Matrix& flat, Tape& tape) const {
        auto y = net().forward(flat, tape);
        std::vector<double> out(flat.rows());
        for (std::size_t b = 0; b < flat.rows(); ++b) out[b] = label_offset_ + label_scale_ * y(b, 0);
        return out;
    }

    /// Input gradient given d(loss)/d(prediction) per row.
    Matrix backward(const Tape& tape, std::span<const double> dprediction, ParamStore* grads = nullptr) const {
        Matrix adj(dprediction.size(), 1);
        for (std::size_t b = 0; b < dprediction.size(); ++b) adj(b, 0) = dprediction[b] * label_scale_;
        return net().backward(tape, std::move(adj), grads);
    }

    double score(const Sequence& seq) const {
        check_length(seq);
        if (landscape_) return synthetic_oracle(seq, *landscape_);
        const Sequence* p = &seq;
        return predict_rows(one_hot_batch(std::span(p, 1), vocab_size_)).front();
    }

    std::vector<double> score_batch(std::span<const Sequence> seqs) const {
        if (seqs.empty()) return {};
        for (const auto& s : seqs) check_length(s);
        if (landscape_) {
            std::vector<double> out;
            out.reserve(seqs.size());
            for (const auto& s : seqs) out.push_back(synthetic_oracle(s, *landscape_));
            return out;
        }
        return predict_rows(one_hot_batch(seqs, vocab_size_));
    }

    Checkpoint to_checkpoint() const {
        Checkpoint c;
        c.kind = "predictor";
        c.metadata["role"] = to_string(role_);
        c.metadata["length"] = length_;
        c.metadata["vocab_size"] = vocab_size_;
        c.metadata["label_offset"] = label_offset_;
        c.metadata["label_scale"] = label_scale_;
        if (landscape_) {
            c.metadata["backend"] = "synthetic_landscape";
            c.metadata["landscape"] = to_json(*landscape_);
        } else {
            c.metadata["backend"] = "net";
            c.nets.emplace("net", *net_);
        }
        return c;
    }

    static PredictorModel from_checkpoint(const Checkpoint& c) {
        if (c.kind != "predictor") throw ValidationError("checkpoint kind '" + c.kind + "' is not a predictor");
        const auto& m = c.metadata;
        if (m.value("backend", "net") == "synthetic_landscape") return PredictorModel(landscape_from_json(m.at("landscape")));
        auto it = c.nets.find("net");
        if (it == c.nets.end()) throw ValidationError("predictor checkpoint has no 'net'");
        return PredictorModel(it->second, m.at("length"), m.at("vocab_size"),
                              predictor_role_from_string(m.at("role")), m.value("label_offset", 0.0),
                              m.value("label_scale", 1.0));
    }

    std::string checksum() const { return checkpoint_checksum(to_checkpoint()); }

    void check_length(const Sequence& seq) const {
        if (seq.size() != length_)
            throw ValidationError("predictor: sequence length " + std::to_string(seq.size()) + ", expected " +
                                  std::to_string(length_));
    }

    void validate_relaxed(const Matrix& relaxed) const {
        if (relaxed.rows() != length_ || relaxed.cols() != vocab_size_)
            throw ValidationError("predictor: input shape " + std::to_string(relaxed.rows()) + "x" +
                                  std::to_string(relaxed.cols()) + ", expected " + std::to_string(length_) + "x" +
                                  std::to_string(vocab_size_));
        for (std::size_t i = 0; i < relaxed.rows(); ++i) {
            double sum = 0.0;
            for (double v : relaxed.row(i)) {
                if (v < -1e-12 || v > 1.0 + 1e-12) throw ValidationError("predictor: entries must lie in [0, 1]");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw ValidationError("predictor: row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }

private:
    std::optional<Net> net_;
    std::optional<SyntheticLandscape> landscape_;
    std::size_t length_ = 0;
    std::size_t vocab_size_ = 0;
    PredictorRole role_ = PredictorRole::predictor;
    double label_offset_ = 0.0;
    double label_scale_ = 1.0;
};

struct PredictorTrainReport {
    std::vector<double> epoch_mse;
    double train_mse = 0.0;
};

inline nlohmann::json to_json(const PredictorTrainReport& r) {
    return {{"epoch_mse", r.epoch_mse}, {"train_mse", r.train_mse}};
}

struct PredictorTrainResult {
    PredictorModel model;
    PredictorTrainReport report;
};

inline double mean_squared_error(const PredictorModel& model, const Dataset& data) {
    auto pred = model.score_batch(data.sequences());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - data.records[i].raw_fitness;
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

namespace detail {

inline PredictorTrainResult fit_regressor(const Dataset& data, const PredictorConfig& cfg, std::uint64_t seed,
                                          PredictorRole role, double offset, double scale) {
    cfg.validate();
    if (data.n() == 0) throw ValidationError("train_predictor: empty dataset");
    if (data.length() != cfg.length) throw ValidationError("train_predictor: data length does not match config");
    Net net(cfg.architecture(), derive_seed(seed, 0));
    Adam opt(net.params(), {.learning_rate = cfg.learning_rate});
    Rng rng(derive_seed(seed, 1));
    const auto seqs = data.sequences();
    std::vector<double> targets;
    targets.reserve(data.n());
    for (const auto& r : data.records) targets.push_back((r.raw_fitness - offset) / scale);
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    ParamStore grads = net.params().zeros_like();
    PredictorTrainReport report;
    std::vector<Sequence> batch;
    Tape tape;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sse = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - start);
            batch.clear();
            for (std::size_t k = 0; k < n; ++k) batch.push_back(seqs[order[start + k]]);
            const Matrix y = net.forward(one_hot_batch(batch, cfg.vocab_size), tape);
            Matrix adj(n, 1);
            for (std::size_t k = 0; k < n; ++k) {
                const double e = y(k, 0) - targets[order[start + k]];
                sse += e * e;
                adj(k, 0) = 2.0 * e / static_cast<double>(n);
            }
            if (!std::isfinite(sse))
                throw DivergenceError("train_predictor: non-finite loss at epoch " + std::to_string(epoch));
            grads.set_zero();
            net.backward(tape, std::move(adj), &grads);
            opt.step(net.params(), grads);
        }
        report.epoch_mse.push_back(sse / static_cast<double>(order.size()) * scale * scale);
    }
    PredictorModel model(std::move(net), cfg.length, cfg.vocab_size, role, offset, scale);
    report.train_mse = mean_squared_error(model, data);
    return {std::move(model), std::move(report)};
}

}  // namespace detail

/// MSE regression on the labels as given (callers pass normalized fitness).
inline PredictorTrainResult train_predictor(const Dataset& data, const PredictorConfig& cfg, std::uint64_t seed,
                                            PredictorRole role = PredictorRole::predictor) {
    return detail::fit_regressor(data, cfg, seed, role, 0.0, 1.0);
}

/// Oracle regressed on the full set in raw units (trained internally on the [y_min, y_max] scale).
inline PredictorTrainResult train_oracle(const Dataset& full, const PredictorConfig& cfg, std::uint64_t seed) {
    return detail::fit_regressor(full, cfg, seed, PredictorRole::oracle, full.y_min, full.y_max - full.y_min);
}

/// Synthetic mode: the oracle is the exact landscape, no training involved.
inline PredictorModel train_oracle(const SyntheticLandscape& landscape) { return PredictorModel(landscape); }

/// Stand-in label smoothing for synthetic experiments (NOT graph-based smoothing): each label
/// becomes the mean over itself and its k nearest Levenshtein neighbours (ties by index).
inline Dataset smooth_labels_knn(const Dataset& data, std::size_t k) {
    Dataset out = data;
    std::vector<std::pair<std::size_t, std::size_t>> dist(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t j = 0; j < data.n(); ++j)
            dist[j] = {j == i ? 0 : levenshtein(data.records[i].sequence, data.records[j].sequence) + 1, j};
        const auto take = std::min(k + 1, data.n());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
        double s = 0.0;
        for (std::size_t q = 0; q < take; ++q) s += data.records[dist[q].second].raw_fitness;
        out.records[i].raw_fitness = s / static_cast<double>(take);
    }
    return out;
}

inline void save_predictor(const std::filesystem::path& path, const PredictorModel& model) {
    save_checkpoint(path, model.to_checkpoint());
}

/// Loads a frozen predictor checkpoint (checksum verified). `role` overrides the stored tag,
/// e.g. to declare converted external weights as the smoothed predictor.
inline PredictorModel load_external_predictor(const std::filesystem::path& path,
                                              std::optional<PredictorRole> role = std::nullopt) {
    auto ckpt = load_checkpoint(path);
    if (role) ckpt.metadata["role"] = to_string(*role);
    return PredictorModel::from_checkpoint(ckpt);
}

}  // namespace vlgpo
