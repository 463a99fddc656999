#pragma once

// Minimal differentiable substrate: a frozen set of layers with exact reverse-mode
// gradients (parameters and inputs), Adam, and a checksummed JSON checkpoint container.
//
// Activations are batch matrices (rows = items). Layers that see sequence structure
// (conv1d, softmax, global_mean_pool) read each row as position-major (length x channels).
// All kernels accumulate in a fixed order, so a row's result does not depend on the
// batch it was computed in.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlgpo/errors.hpp"
#include "vlgpo/matrix.hpp"
#include "vlgpo/rng.hpp"

namespace vlgpo {

enum class LayerKind { dense, conv1d, relu, leaky_relu, silu, tanh, softmax, global_mean_pool };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::relu: return "relu";
        case LayerKind::leaky_relu: return "leaky_relu";
        case LayerKind::silu: return "silu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::softmax: return "softmax";
        case LayerKind::global_mean_pool: return "global_mean_pool";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::dense, LayerKind::conv1d, LayerKind::relu, LayerKind::leaky_relu, LayerKind::silu,
                   LayerKind::tanh, LayerKind::softmax, LayerKind::global_mean_pool})
        if (s == to_string(k)) return k;
    throw ValidationError("unsupported layer kind '" + s + "'");
}

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;            // dense
    std::size_t out = 0;           // dense
    std::size_t length = 0;        // conv1d, global_mean_pool
    std::size_t in_channels = 0;   // conv1d, global_mean_pool (channels)
    std::size_t out_channels = 0;  // conv1d
    std::size_t kernel = 0;        // conv1d, odd, zero "same" padding
    std::size_t group = 0;         // softmax
    double slope = 0.01;           // leaky_relu

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv1d; }

    /// Output width for an input of width `w`; throws on mismatch.
    std::size_t output_width(std::size_t w) const {
        auto need = [&](std::size_t expected) {
            if (w != expected)
                throw ValidationError(std::string("layer ") + to_string(kind) + ": input width " + std::to_string(w) +
                                      ", expected " + std::to_string(expected));
        };
        switch (kind) {
            case LayerKind::dense: need(in); return out;
            case LayerKind::conv1d: need(length * in_channels); return length * out_channels;
            case LayerKind::global_mean_pool: need(length * in_channels); return in_channels;
            case LayerKind::softmax:
                if (group == 0 || w % group != 0) throw ValidationError("softmax: width not divisible by group");
                return w;
            default: return w;
        }
    }

    std::size_t weight_rows() const { return kind == LayerKind::dense ? in : kernel * in_channels; }
    std::size_t weight_cols() const { return kind == LayerKind::dense ? out : out_channels; }
    std::size_t fan_in() const { return weight_rows(); }
};

namespace layers {
inline LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    return s;
}
inline LayerSpec conv1d(std::size_t length, std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
    if (kernel % 2 == 0) throw ValidationError("conv1d kernel must be odd");
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.length = length;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    return s;
}
inline LayerSpec relu() { return {.kind = LayerKind::relu}; }
inline LayerSpec leaky_relu(double slope = 0.01) { return {.kind = LayerKind::leaky_relu, .slope = slope}; }
inline LayerSpec silu() { return {.kind = LayerKind::silu}; }
inline LayerSpec tanh() { return {.kind = LayerKind::tanh}; }
inline LayerSpec softmax(std::size_t group) { return {.kind = LayerKind::softmax, .group = group}; }
inline LayerSpec global_mean_pool(std::size_t length, std::size_t channels) {
    return {.kind = LayerKind::global_mean_pool, .length = length, .in_channels = channels};
}
}  // namespace layers

/// Declarative network descriptor: input width plus an ordered layer list.
struct Architecture {
    std::size_t input_width = 0;
    std::vector<LayerSpec> layers;

    std::size_t output_width() const {
        std::size_t w = input_width;
        for (const auto& l : layers) w = l.output_width(w);
        return w;
    }
    void validate() const { (void)output_width(); }
};

inline nlohmann::json to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    switch (s.kind) {
        case LayerKind::dense: j["in"] = s.in; j["out"] = s.out; break;
        case LayerKind::conv1d:
            j["length"] = s.length;
            j["in_channels"] = s.in_channels;
            j["out_channels"] = s.out_channels;
            j["kernel"] = s.kernel;
            break;
        case LayerKind::global_mean_pool: j["length"] = s.length; j["channels"] = s.in_channels; break;
        case LayerKind::softmax: j["group"] = s.group; break;
        case LayerKind::leaky_relu: j["slope"] = s.slope; break;
        default: break;
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const auto kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::dense: return layers::dense(j.at("in"), j.at("out"));
        case LayerKind::conv1d:
            return layers::conv1d(j.at("length"), j.at("in_channels"), j.at("out_channels"), j.at("kernel"));
        case LayerKind::global_mean_pool: return layers::global_mean_pool(j.at("length"), j.at("channels"));
        case LayerKind::softmax: return layers::softmax(j.at("group"));
        case LayerKind::leaky_relu: return layers::leaky_relu(j.at("slope"));
        default: return LayerSpec{.kind = kind};
    }
}

inline nlohmann::json to_json(const Architecture& a) {
    nlohmann::json j;
    j["input_width"] = a.input_width;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : a.layers) j["layers"].push_back(to_json(l));
    return j;
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
    Architecture a;
    a.input_width = j.at("input_width");
    for (const auto& l : j.at("layers")) a.layers.push_back(layer_from_json(l));
    a.validate();
    return a;
}

struct Param {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
};

/// Named parameter arrays of one network.
class ParamStore {
public:
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::size_t count() const { return params_.size(); }
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.values.size();
        return n;
    }

    ParamStore zeros_like() const {
        ParamStore z;
        for (const auto& p : params_) z.params_.push_back({p.name, p.rows, p.cols, std::vector<double>(p.values.size())});
        return z;
    }

    void set_zero() {
        for (auto& p : params_) std::fill(p.values.begin(), p.values.end(), 0.0);
    }

    void add(const ParamStore& o) {
        for (std::size_t i = 0; i < params_.size(); ++i)
            for (std::size_t k = 0; k < params_[i].values.size(); ++k) params_[i].values[k] += o.params_[i].values[k];
    }

    bool all_finite() const {
        for (const auto& p : params_)
            for (double v : p.values)
                if (!std::isfinite(v)) return false;
        return true;
    }

    const Param* find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.params_.size() != b.params_.size()) return false;
        for (std::size_t i = 0; i < a.params_.size(); ++i)
            if (a.params_[i].name != b.params_[i].name || a.params_[i].values != b.params_[i].values) return false;
        return true;
    }

private:
    std::vector<Param> params_;
};

/// Per-layer activations recorded by a forward pass; activations[i] feeds layer i.
struct Tape {
    std::vector<Matrix> activations;
};

class Net {
public:
    Net() = default;

    /// Deterministic init: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Net(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
        arch_.validate();
        Rng rng(seed);
        for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
            const auto& l = arch_.layers[i];
            if (!l.has_params()) continue;
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.fan_in()));
            std::uniform_real_distribution<double> u(-bound, bound);
            Param w{"layer" + std::to_string(i) + ".weight", l.weight_rows(), l.weight_cols(), {}};
            w.values.resize(w.rows * w.cols);
            for (auto& v : w.values) v = u(rng);
            Param b{"layer" + std::to_string(i) + ".bias", 1, l.weight_cols(), {}};
            b.values.resize(b.cols);
            for (auto& v : b.values) v = u(rng);
            params_.params().push_back(std::move(w));
            params_.params().push_back(std::move(b));
        }
        index_params();
    }

    Net(Architecture arch, ParamStore params) : arch_(std::move(arch)), params_(std::move(params)) {
        arch_.validate();
        index_params();
    }

    const Architecture& architecture() const { return arch_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }
    std::size_t input_width() const { return arch_.input_width; }
    std::size_t output_width() const { return arch_.output_width(); }

    Matrix forward(const Matrix& x) const { return run(x, nullptr); }
    Matrix forward(const Matrix& x, Tape& tape) const { return run(x, &tape); }

    /// Reverse pass. Returns d(loss)/d(input); when `grads` is non-null, parameter
    /// gradients are accumulated into it (it must be shaped like params()).
    Matrix backward(const Tape& tape, Matrix adjoint, ParamStore* grads = nullptr) const {
        if (tape.activations.size() != arch_.layers.size() + 1) throw ValidationError("backward: tape does not match net");
        for (std::size_t li = arch_.layers.size(); li-- > 0;) {
            const auto& l = arch_.layers[li];
            const Matrix& x = tape.activations[li];
            const Matrix& y = tape.activations[li + 1];
            Matrix dx(x.rows(), x.cols());
            switch (l.kind) {
                case LayerKind::dense: dense_backward(li, x, adjoint, dx, grads); break;
                case LayerKind::conv1d: conv_backward(li, x, adjoint, dx, grads); break;
                case LayerKind::relu:
                    for (std::size_t k = 0; k < x.size(); ++k) dx.data()[k] = x.data()[k] > 0.0 ? adjoint.data()[k] : 0.0;
                    break;
                case LayerKind::leaky_relu:
                    for (std::size_t k = 0; k < x.size(); ++k)
                        dx.data()[k] = x.data()[k] > 0.0 ? adjoint.data()[k] : l.slope * adjoint.data()[k];
                    break;
                case LayerKind::silu:
                    for (std::size_t k = 0; k < x.size(); ++k) {
                        const double s = 1.0 / (1.0 + std::exp(-x.data()[k]));
                        dx.data()[k] = adjoint.data()[k] * s * (1.0 + x.data()[k] * (1.0 - s));
                    }
                    break;
                case LayerKind::tanh:
                    for (std::size_t k = 0; k < x.size(); ++k)
                        dx.data()[k] = adjoint.data()[k] * (1.0 - y.data()[k] * y.data()[k]);
                    break;
                case LayerKind::softmax: dx = softmax_groups_backward(y, adjoint, l.group); break;
                case LayerKind::global_mean_pool: {
                    const double inv = 1.0 / static_cast<double>(l.length);
                    for (std::size_t b = 0; b < x.rows(); ++b)
                        for (std::size_t p = 0; p < l.length; ++p)
                            for (std::size_t c = 0; c < l.in_channels; ++c)
                                dx(b, p * l.in_channels + c) = adjoint(b, c) * inv;
                    break;
                }
            }
            if (!dx.all_finite())
                throw DivergenceError("non-finite gradient in layer " + std::to_string(li) + " (" + to_string(l.kind) + ")");
            adjoint = std::move(dx);
        }
        return adjoint;
    }

private:
    void index_params() {
        weight_index_.assign(arch_.layers.size(), -1);
        int k = 0;
        for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
            const auto& l = arch_.layers[i];
            if (!l.has_params()) continue;
            if (static_cast<std::size_t>(k) + 1 >= params_.count())
                throw ValidationError("parameter store does not match architecture");
            const auto& w = params_[static_cast<std::size_t>(k)];
            const auto& b = params_[static_cast<std::size_t>(k) + 1];
            if (w.rows != l.weight_rows() || w.cols != l.weight_cols() || w.values.size() != w.rows * w.cols ||
                b.values.size() != l.weight_cols())
                throw ValidationError("parameter shapes do not match layer " + std::to_string(i));
            weight_index_[i] = k;
            k += 2;
        }
        if (static_cast<std::size_t>(k) != params_.count()) throw ValidationError("parameter store has extra arrays");
    }

    Matrix run(const Matrix& input, Tape* tape) const {
        if (input.cols() != arch_.input_width)
            throw ValidationError("forward: input width " + std::to_string(input.cols()) + ", expected " +
                                  std::to_string(arch_.input_width));
        if (tape) {
            tape->activations.clear();
            tape->activations.reserve(arch_.layers.size() + 1);
            tape->activations.push_back(input);
        }
        Matrix x = input;
        for (std::size_t li = 0; li < arch_.layers.size(); ++li) {
            const auto& l = arch_.layers[li];
            Matrix y;
            switch (l.kind) {
                case LayerKind::dense: y = dense_forward(li, x); break;
                case LayerKind::conv1d: y = conv_forward(li, x); break;
                case LayerKind::relu:
                    y = x;
                    for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
                    break;
                case LayerKind::leaky_relu:
                    y = x;
                    for (auto& v : y.data()) v = v > 0.0 ? v : l.slope * v;
                    break;
                case LayerKind::silu:
                    y = x;
                    for (auto& v : y.data()) v = v / (1.0 + std::exp(-v));
                    break;
                case LayerKind::tanh:
                    y = x;
                    for (auto& v : y.data()) v = std::tanh(v);
                    break;
                case LayerKind::softmax: y = softmax_groups(x, l.group); break;
                case LayerKind::global_mean_pool: {
                    y = Matrix(x.rows(), l.in_channels);
                    const double inv = 1.0 / static_cast<double>(l.length);
                    for (std::size_t b = 0; b < x.rows(); ++b)
                        for (std::size_t p = 0; p < l.length; ++p)
                            for (std::size_t c = 0; c < l.in_channels; ++c) y(b, c) += x(b, p * l.in_channels + c);
                    y *= inv;
                    break;
                }
            }
            if (!y.all_finite())
                throw DivergenceError("non-finite activation in layer " + std::to_string(li) + " (" + to_string(l.kind) + ")");
            if (tape) tape->activations.push_back(y);
            x = std::move(y);
        }
        return x;
    }

    const Param& weight(std::size_t li) const { return params_[static_cast<std::size_t>(weight_index_[li])]; }
    const Param& bias(std::size_t li) const { return params_[static_cast<std::size_t>(weight_index_[li]) + 1]; }

    Matrix dense_forward(std::size_t li, const Matrix& x) const {
        const auto& l = arch_.layers[li];
        const auto& W = weight(li).values;
        const auto& bv = bias(li).values;
        Matrix y(x.rows(), l.out);
        for (std::size_t b = 0; b < x.rows(); ++b) {
            double* yr = y.row(b).data();
            const double* xr = x.row(b).data();
            std::copy(bv.begin(), bv.end(), yr);
            for (std::size_t i = 0; i < l.in; ++i) {
                const double xv = xr[i];
                if (xv == 0.0) continue;
                const double* w = W.data() + i * l.out;
                for (std::size_t o = 0; o < l.out; ++o) yr[o] += xv * w[o];
            }
        }
        return y;
    }

    void dense_backward(std::size_t li, const Matrix& x, const Matrix& dy, Matrix& dx, ParamStore* grads) const {
        const auto& l = arch_.layers[li];
        const auto& W = weight(li).values;
        double* dW = grads ? (*grads)[static_cast<std::size_t>(weight_index_[li])].values.data() : nullptr;
        double* db = grads ? (*grads)[static_cast<std::size_t>(weight_index_[li]) + 1].values.data() : nullptr;
        for (std::size_t b = 0; b < x.rows(); ++b) {
            const double* dyr = dy.row(b).data();
            const double* xr = x.row(b).data();
            double* dxr = dx.row(b).data();
            for (std::size_t i = 0; i < l.in; ++i) {
                const double* w = W.data() + i * l.out;
                double acc = 0.0;
                for (std::size_t o = 0; o < l.out; ++o) acc += dyr[o] * w[o];
                dxr[i] = acc;
            }
            if (dW) {
                for (std::size_t i = 0; i < l.in; ++i) {
                    const double xv = xr[i];
                    if (xv == 0.0) continue;
                    double* g = dW + i * l.out;
                    for (std::size_t o = 0; o < l.out; ++o) g[o] += xv * dyr[o];
                }
                for (std::size_t o = 0; o < l.out; ++o) db[o] += dyr[o];
            }
        }
    }

    Matrix conv_forward(std::size_t li, const Matrix& x) const {
        const auto& l = arch_.layers[li];
        const auto& W = weight(li).values;
        const auto& bv = bias(li).values;
        const std::size_t L = l.length, Ci = l.in_channels, Co = l.out_channels, half = l.kernel / 2;
        Matrix y(x.rows(), L * Co);
        for (std::size_t b = 0; b < x.rows(); ++b) {
            const double* xr = x.row(b).data();
            double* yrow = y.row(b).data();
            for (std::size_t p = 0; p < L; ++p) {
                double* yr = yrow + p * Co;
                std::copy(bv.begin(), bv.end(), yr);
                for (std::size_t k = 0; k < l.kernel; ++k) {
                    const auto q = static_cast<std::ptrdiff_t>(p + k) - static_cast<std::ptrdiff_t>(half);
                    if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
                    const double* xq = xr + static_cast<std::size_t>(q) * Ci;
                    for (std::size_t c = 0; c < Ci; ++c) {
                        const double xv = xq[c];
                        if (xv == 0.0) continue;
                        const double* w = W.data() + (k * Ci + c) * Co;
                        for (std::size_t o = 0; o < Co; ++o) yr[o] += xv * w[o];
                    }
                }
            }
        }
        return y;
    }

    void conv_backward(std::size_t li, const Matrix& x, const Matrix& dy, Matrix& dx, ParamStore* grads) const {
        const auto& l = arch_.layers[li];
        const auto& W = weight(li).values;
        const std::size_t L = l.length, Ci = l.in_channels, Co = l.out_channels, half = l.kernel / 2;
        double* dW = grads ? (*grads)[static_cast<std::size_t>(weight_index_[li])].values.data() : nullptr;
        double* db = grads ? (*grads)[static_cast<std::size_t>(weight_index_[li]) + 1].values.data() : nullptr;
        for (std::size_t b = 0; b < x.rows(); ++b) {
            const double* xr = x.row(b).data();
            const double* dyrow = dy.row(b).data();
            double* dxr = dx.row(b).data();
            for (std::size_t p = 0; p < L; ++p) {
                const double* dyr = dyrow + p * Co;
                for (std::size_t k = 0; k < l.kernel; ++k) {
                    const auto q = static_cast<std::ptrdiff_t>(p + k) - static_cast<std::ptrdiff_t>(half);
                    if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
                    const double* xq = xr + static_cast<std::size_t>(q) * Ci;
                    double* dxq = dxr + static_cast<std::size_t>(q) * Ci;
                    for (std::size_t c = 0; c < Ci; ++c) {
                        const double* w = W.data() + (k * Ci + c) * Co;
                        double acc = 0.0;
                        for (std::size_t o = 0; o < Co; ++o) acc += dyr[o] * w[o];
                        dxq[c] += acc;
                        if (dW && xq[c] != 0.0) {
                            double* g = dW + (k * Ci + c) * Co;
                            const double xv = xq[c];
                            for (std::size_t o = 0; o < Co; ++o) g[o] += xv * dyr[o];
                        }
                    }
                }
                if (db)
                    for (std::size_t o = 0; o < Co; ++o) db[o] += dyr[o];
            }
        }
    }

    Architecture arch_;
    ParamStore params_;
    std::vector<int> weight_index_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step_count = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ValidationError("adam: learning_rate must be > 0");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw ValidationError("adam: betas must lie in (0, 1)");
    }
};

/// Adam with bias-corrected moments; one optimizer instance per parameter store.
class Adam {
public:
    Adam(const ParamStore& params, AdamConfig cfg)
        : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {
        cfg_.validate();
    }

    void step(ParamStore& params, const ParamStore& grads) {
        if (grads.count() != params.count()) throw ValidationError("adam: gradient/parameter count mismatch");
        ++cfg_.step_count;
        const double t = static_cast<double>(cfg_.step_count);
        const double c1 = 1.0 - std::pow(cfg_.beta1, t);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t);
        for (std::size_t i = 0; i < params.count(); ++i) {
            auto& p = params[i].values;
            const auto& g = grads[i].values;
            if (g.size() != p.size()) throw ValidationError("adam: shape mismatch for " + params[i].name);
            auto& m = m_[i].values;
            auto& v = v_[i].values;
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
                p[k] -= cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
            }
        }
    }

    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    ParamStore m_;
    ParamStore v_;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const Net& net) {
    nlohmann::json j;
    j["architecture"] = to_json(net.architecture());
    j["params"] = nlohmann::json::array();
    for (const auto& p : net.params().params())
        j["params"].push_back({{"name", p.name}, {"shape", {p.rows, p.cols}}, {"values", p.values}});
    return j;
}

inline Net net_from_json(const nlohmann::json& j) {
    auto arch = architecture_from_json(j.at("architecture"));
    ParamStore ps;
    for (const auto& pj : j.at("params")) {
        Param p;
        p.name = pj.at("name").get<std::string>();
        p.rows = pj.at("shape").at(0);
        p.cols = pj.at("shape").at(1);
        p.values = pj.at("values").get<std::vector<double>>();
        if (p.values.size() != p.rows * p.cols) throw ValidationError("checkpoint: parameter " + p.name + " has wrong size");
        ps.params().push_back(std::move(p));
    }
    return Net(std::move(arch), std::move(ps));
}

inline constexpr int kCheckpointVersion = 1;

/// Versioned container: kind tag, free-form metadata and named networks.
struct Checkpoint {
    std::string kind;
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Net> nets;
};

inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

inline nlohmann::json checkpoint_payload(const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = "vlgpo-checkpoint";
    j["version"] = kCheckpointVersion;
    j["kind"] = ckpt.kind;
    j["metadata"] = ckpt.metadata;
    j["nets"] = nlohmann::json::object();
    for (const auto& [name, net] : ckpt.nets) j["nets"][name] = to_json(net);
    return j;
}

/// Content checksum over the canonical (sorted-key) serialization of everything but the checksum.
inline std::string checkpoint_checksum(const Checkpoint& ckpt) { return fnv1a_hex(checkpoint_payload(ckpt).dump()); }

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    auto j = checkpoint_payload(ckpt);
    j["checksum"] = fnv1a_hex(j.dump());
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "vlgpo-checkpoint")
        throw ValidationError("checkpoint " + path.string() + ": unknown format");
    if (j.value("version", 0) != kCheckpointVersion)
        throw ValidationError("checkpoint " + path.string() + ": unsupported version");
    if (!j.contains("checksum")) throw ValidationError("checkpoint " + path.string() + ": missing checksum");
    const auto stored = j["checksum"].get<std::string>();
    j.erase("checksum");
    if (fnv1a_hex(j.dump()) != stored) throw ValidationError("checkpoint " + path.string() + ": checksum mismatch");
    Checkpoint ckpt;
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.metadata = j.at("metadata");
    for (auto it = j.at("nets").begin(); it != j.at("nets").end(); ++it) ckpt.nets.emplace(it.key(), net_from_json(it.value()));
    return ckpt;
}

}  // namespace vlgpo
