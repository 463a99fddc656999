#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vlgpo/evalharness.hpp"

namespace vlgpo::testing {

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of f over every entry of `x` (restored afterwards).
inline std::vector<double> central_differences(std::vector<double>& x, const std::function<double()>& f,
                                               double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = f();
        x[i] = x0 - h;
        const double fm = f();
        x[i] = x0;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    auto v = standard_normal(rng, rows * cols);
    for (auto& x : v) x *= scale;
    return Matrix(rows, cols, std::move(v));
}

inline Sequence random_sequence(Rng& rng, std::size_t length, std::size_t vocab) {
    std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
    Sequence s;
    for (std::size_t i = 0; i < length; ++i) s.tokens.push_back(static_cast<Token>(tok(rng)));
    return s;
}

/// Full (n+1) x (m+1) dynamic-programming table; independent of the library's two-row version.
inline std::size_t levenshtein_table(const Sequence& a, const Sequence& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> D(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) D[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) D[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            D[i][j] = std::min({D[i - 1][j] + 1, D[i][j - 1] + 1, D[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return D[n][m];
}

/// Median by full sort.
inline double sorted_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double brute_diversity(const std::vector<Sequence>& s) {
    std::vector<double> d;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (i < j) d.push_back(static_cast<double>(levenshtein_table(s[i], s[j])));
    return sorted_median(d);
}

inline double brute_novelty(const std::vector<Sequence>& s, const std::vector<Sequence>& train) {
    std::vector<double> mins;
    for (const auto& x : s) {
        std::vector<double> all;
        for (const auto& t : train) all.push_back(static_cast<double>(levenshtein_table(x, t)));
        mins.push_back(*std::min_element(all.begin(), all.end()));
    }
    return sorted_median(mins);
}

/// Small VAE / flow / predictor stack with random weights, for fast sampler tests.
struct TinyStack {
    VaeModel vae;
    FlowModel flow;
    FlowModel conditional_flow;
    PredictorModel predictor;

    static TinyStack make(std::size_t length = 4, std::size_t vocab = 5, std::size_t latent = 3, std::uint64_t seed = 1) {
        VaeConfig vc;
        vc.length = length;
        vc.vocab_size = vocab;
        vc.latent_dim = latent;
        vc.conv_channels = 3;
        vc.hidden = 8;
        FlowArchitecture fa;
        fa.latent_dim = latent;
        fa.embedding_dim = 4;
        fa.hidden = 8;
        fa.depth = 2;
        auto ca = fa;
        ca.conditional = true;
        PredictorConfig pc;
        pc.length = length;
        pc.vocab_size = vocab;
        pc.channels = 3;
        pc.hidden = 6;
        pc.kernel = 3;
        return {VaeModel(vc, derive_seed(seed, 0)), FlowModel(fa, derive_seed(seed, 1)), FlowModel(ca, derive_seed(seed, 2)),
                PredictorModel(Net(pc.architecture(), derive_seed(seed, 3)), length, vocab, PredictorRole::predictor)};
    }

    ModelStack stack() const { return {&vae, &flow, &predictor, &conditional_flow}; }
};

inline std::filesystem::path fresh_temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("vlgpo_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace vlgpo::testing
