#pragma once

// Discrete-sequence data layer: vocabulary, tokenization, one-hot encoding, edit distance,
// CSV ingestion, fitness normalization, task difficulty filtering and synthetic landscapes.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ranges>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vlgpo/errors.hpp"
#include "vlgpo/matrix.hpp"
#include "vlgpo/rng.hpp"

namespace vlgpo {

using Token = std::uint8_t;

class Vocabulary {
public:
    explicit Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
        if (symbols_.empty()) throw ValidationError("vocabulary must not be empty");
        if (symbols_.size() > 255) throw ValidationError("vocabulary larger than 255 symbols");
        index_.fill(-1);
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            auto c = static_cast<unsigned char>(symbols_[i]);
            if (index_[c] != -1)
                throw ValidationError(std::string("duplicate vocabulary symbol '") + symbols_[i] + "'");
            index_[c] = static_cast<int>(i);
        }
    }

    /// The 20 canonical amino acids in alphabetical one-letter order.
    static const Vocabulary& amino_acids() {
        static const Vocabulary v("ACDEFGHIKLMNPQRSTVWY");
        return v;
    }

    std::size_t size() const { return symbols_.size(); }
    const std::string& symbols() const { return symbols_; }
    char symbol(Token t) const { return symbols_.at(t); }
    std::optional<Token> index(char c) const {
        int i = index_[static_cast<unsigned char>(c)];
        if (i < 0) return std::nullopt;
        return static_cast<Token>(i);
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

private:
    std::string symbols_;
    std::array<int, 256> index_{};
};

struct Sequence {
    std::vector<Token> tokens;

    Sequence() = default;
    explicit Sequence(std::vector<Token> t) : tokens(std::move(t)) {}

    std::size_t size() const { return tokens.size(); }
    Token operator[](std::size_t i) const { return tokens[i]; }
    Token& operator[](std::size_t i) { return tokens[i]; }

    auto operator<=>(const Sequence&) const = default;
};

struct SequenceHash {
    std::size_t operator()(const Sequence& s) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (Token t : s.tokens) h = (h ^ t) * 1099511628211ULL;
        return static_cast<std::size_t>(h);
    }
};

class TokenizeError : public ValidationError {
public:
    TokenizeError(std::size_t position, char symbol)
        : ValidationError("unknown symbol '" + std::string(1, symbol) + "' at position " +
                          std::to_string(position)),
          position_(position), symbol_(symbol) {}
    /// 1-based position of the first offending character.
    std::size_t position() const { return position_; }
    char symbol() const { return symbol_; }

private:
    std::size_t position_;
    char symbol_;
};

inline Sequence tokenize(std::string_view text, const Vocabulary& vocab) {
    Sequence out;
    out.tokens.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto t = vocab.index(text[i]);
        if (!t) throw TokenizeError(i + 1, text[i]);
        out.tokens.push_back(*t);
    }
    return out;
}

inline std::string detokenize(const Sequence& seq, const Vocabulary& vocab) {
    std::string out;
    out.reserve(seq.size());
    for (Token t : seq.tokens) out.push_back(vocab.symbol(t));
    return out;
}

/// d x |V| indicator matrix.
inline Matrix one_hot(const Sequence& seq, std::size_t vocab_size) {
    Matrix m(seq.size(), vocab_size);
    for (std::size_t i = 0; i < seq.size(); ++i) m(i, seq[i]) = 1.0;
    return m;
}
inline Matrix one_hot(const Sequence& seq, const Vocabulary& vocab) { return one_hot(seq, vocab.size()); }

/// Batch of flattened one-hot rows (row b = sequence b, position-major layout d*|V|).
inline Matrix one_hot_batch(std::span<const Sequence> seqs, std::size_t vocab_size) {
    const std::size_t d = seqs.empty() ? 0 : seqs.front().size();
    Matrix m(seqs.size(), d * vocab_size);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        if (seqs[b].size() != d) throw ValidationError("one_hot_batch: ragged sequence lengths");
        for (std::size_t i = 0; i < d; ++i) m(b, i * vocab_size + seqs[b][i]) = 1.0;
    }
    return m;
}

/// Per-position argmax over groups of `vocab_size` columns; ties go to the lowest index.
inline Sequence argmax_tokens(std::span<const double> flat, std::size_t vocab_size) {
    Sequence s;
    s.tokens.resize(flat.size() / vocab_size);
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < vocab_size; ++k)
            if (flat[i * vocab_size + k] > flat[i * vocab_size + best]) best = k;
        s[i] = static_cast<Token>(best);
    }
    return s;
}

/// Unit-cost edit distance (insert / delete / substitute), two-row dynamic program.
template <std::ranges::random_access_range A, std::ranges::random_access_range B>
std::size_t levenshtein(const A& a, const B& b) {
    const std::size_t n = std::ranges::size(a);
    const std::size_t m = std::ranges::size(b);
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

inline std::size_t levenshtein(const Sequence& a, const Sequence& b) {
    return levenshtein(a.tokens, b.tokens);
}

struct FitnessRecord {
    Sequence sequence;
    double raw_fitness = 0.0;
};

/// Affine map taking y_min to 0 and y_max to 1. Values outside the range are not clipped.
class FitnessNormalizer {
public:
    FitnessNormalizer(double y_min, double y_max) : y_min_(y_min), y_max_(y_max) {
        if (!std::isfinite(y_min) || !std::isfinite(y_max) || !(y_min < y_max))
            throw ValidationError("fitness range requires finite y_min < y_max");
    }
    double normalize(double y) const { return (y - y_min_) / (y_max_ - y_min_); }
    double denormalize(double u) const { return y_min_ + u * (y_max_ - y_min_); }
    double y_min() const { return y_min_; }
    double y_max() const { return y_max_; }

private:
    double y_min_;
    double y_max_;
};

/// Fitness-labelled sequences. y_min / y_max are the extremes of the full reference set,
/// which subsets keep so that normalization stays consistent.
struct Dataset {
    std::vector<FitnessRecord> records;
    double y_min = 0.0;
    double y_max = 1.0;

    std::size_t n() const { return records.size(); }
    std::size_t length() const { return records.empty() ? 0 : records.front().sequence.size(); }
    FitnessNormalizer normalizer() const { return {y_min, y_max}; }

    std::vector<Sequence> sequences() const {
        std::vector<Sequence> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.sequence);
        return out;
    }
    std::vector<double> fitness() const {
        std::vector<double> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.raw_fitness);
        return out;
    }

    /// Copy with fitness mapped through the normalizer; the copy's range becomes [0, 1].
    Dataset normalized() const {
        Dataset out;
        const auto norm = normalizer();
        out.records.reserve(records.size());
        for (const auto& r : records) out.records.push_back({r.sequence, norm.normalize(r.raw_fitness)});
        out.y_min = 0.0;
        out.y_max = 1.0;
        return out;
    }

    /// Subset keeping the parent's range.
    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out;
        out.y_min = y_min;
        out.y_max = y_max;
        out.records.reserve(indices.size());
        for (auto i : indices) out.records.push_back(records.at(i));
        return out;
    }
};

/// Deterministic shuffled split into (train, held-out) with `holdout_fraction` in the second part.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double holdout_fraction,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> idx(data.n());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_hold = static_cast<std::size_t>(std::round(holdout_fraction * static_cast<double>(data.n())));
    std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    return {data.subset(train), data.subset(hold)};
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_real(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Reads a `y_min=<real>` / `y_max=<real>` sidecar.
inline FitnessNormalizer read_range_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open range file " + path.string());
    std::optional<double> lo, hi;
    std::string line;
    while (std::getline(in, line)) {
        auto s = detail::trim(line);
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string_view::npos) throw ValidationError("range file: malformed line '" + line + "'");
        auto key = detail::trim(s.substr(0, eq));
        auto val = detail::parse_real(s.substr(eq + 1));
        if (!val) throw ValidationError("range file: non-numeric value in '" + line + "'");
        if (key == "y_min") lo = val;
        else if (key == "y_max") hi = val;
        else throw ValidationError("range file: unknown key '" + std::string(key) + "'");
    }
    if (!lo || !hi) throw ValidationError("range file must declare both y_min and y_max");
    return {*lo, *hi};
}

inline void write_range_file(const std::filesystem::path& path, const FitnessNormalizer& range) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write range file " + path.string());
    out.precision(17);
    out << "y_min=" << range.y_min() << "\ny_max=" << range.y_max() << "\n";
}

/// Loads a `sequence,fitness` CSV. The normalization range comes from `declared_range`
/// when given, otherwise from the file's own extremes.
inline Dataset load_csv(const std::filesystem::path& path, const Vocabulary& vocab,
                        std::optional<FitnessNormalizer> declared_range = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV " + path.string());
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    Dataset data;
    while (std::getline(in, line)) {
        ++line_no;
        auto s = detail::trim(line);
        if (s.empty()) continue;
        if (!header_seen) {
            if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF) s.remove_prefix(3);  // BOM
            if (s != "sequence,fitness")
                throw ValidationError(path.string() + ": expected header 'sequence,fitness'");
            header_seen = true;
            continue;
        }
        auto comma = s.find(',');
        if (comma == std::string_view::npos || s.find(',', comma + 1) != std::string_view::npos)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected two fields");
        auto seq_text = detail::trim(s.substr(0, comma));
        auto fit = detail::parse_real(s.substr(comma + 1));
        if (!fit || !std::isfinite(*fit))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": non-numeric fitness");
        Sequence seq;
        try {
            seq = tokenize(seq_text, vocab);
        } catch (const TokenizeError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!data.records.empty() && seq.size() != data.length())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": ragged length " +
                                  std::to_string(seq.size()) + " (expected " +
                                  std::to_string(data.length()) + ")");
        data.records.push_back({std::move(seq), *fit});
    }
    if (!header_seen || data.records.empty()) throw ValidationError(path.string() + ": empty dataset");
    if (data.length() == 0) throw ValidationError(path.string() + ": zero-length sequences");
    if (declared_range) {
        data.y_min = declared_range->y_min();
        data.y_max = declared_range->y_max();
    } else {
        auto f = data.fitness();
        auto [lo, hi] = std::minmax_element(f.begin(), f.end());
        data.y_min = *lo;
        data.y_max = *hi;
        if (!(data.y_min < data.y_max))
            throw ValidationError(path.string() + ": all fitness values equal; declare a range file");
    }
    return data;
}

inline void write_csv(const std::filesystem::path& path, const Dataset& data, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write CSV " + path.string());
    out.precision(17);
    out << "sequence,fitness\n";
    for (const auto& r : data.records) out << detokenize(r.sequence, vocab) << ',' << r.raw_fitness << '\n';
}

// ---------------------------------------------------------------------------
// Difficulty filtering

/// Linear-interpolation percentile (the common "type 7" definition), p in [0, 100].
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("percentile of empty set");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Fitness window [q(low), q(high)) over the full set plus the minimum edit distance `gap`
/// to every member of the full set's top percentile. high >= 100 makes the window closed.
struct DifficultySpec {
    double low_percentile = 0.0;
    double high_percentile = 100.0;
    std::size_t gap = 0;
    double top_percentile = 99.0;

    static DifficultySpec medium() { return {20.0, 40.0, 6}; }
    static DifficultySpec hard() { return {0.0, 30.0, 7}; }
};

inline std::vector<std::size_t> top_percentile_indices(const Dataset& full, double p) {
    const double cut = percentile(full.fitness(), p);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < full.n(); ++i)
        if (full.records[i].raw_fitness >= cut) out.push_back(i);
    return out;
}

inline Dataset difficulty_filter(const Dataset& full, const DifficultySpec& spec) {
    if (full.n() == 0) throw ValidationError("difficulty_filter: empty input");
    const auto fitness = full.fitness();
    const double lo = percentile(fitness, spec.low_percentile);
    const double hi = percentile(fitness, spec.high_percentile);
    const bool closed = spec.high_percentile >= 100.0;
    std::vector<Sequence> top;
    if (spec.gap > 0)
        for (auto i : top_percentile_indices(full, spec.top_percentile)) top.push_back(full.records[i].sequence);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < full.n(); ++i) {
        const double y = fitness[i];
        if (y < lo || (closed ? y > hi : y >= hi)) continue;
        bool far = true;
        for (const auto& t : top)
            if (levenshtein(full.records[i].sequence, t) < spec.gap) {
                far = false;
                break;
            }
        if (far) keep.push_back(i);
    }
    if (keep.empty())
        throw ValidationError("difficulty_filter: no records satisfy the percentile window and gap; "
                              "widen the window or lower the gap");
    return full.subset(keep);
}

// ---------------------------------------------------------------------------
// Synthetic landscapes

struct Site {
    std::size_t pos = 0;
    Token tok = 0;
    auto operator<=>(const Site&) const = default;
};

struct PairTerm {
    Site a;
    Site b;
    double weight = 0.0;
};

struct LandscapeConfig {
    std::size_t length = 20;
    std::size_t vocab_size = 20;
    std::uint64_t seed = 0;
    /// Number of pairwise epistatic terms; negative means 2 * length.
    long pairwise_terms = -1;
    /// Pair weights are drawn from U(-negative_scale, positive_scale).
    double positive_scale = 1.0;
    double negative_scale = 0.6;
};

/// Sparse additive-plus-pairwise landscape over match indicators to a target sequence.
/// Linear weights are chosen so that every single match is beneficial in every context,
/// hence the target is the global optimum and the all-mismatch sequences are the minimum.
/// Evaluation is rescaled so those extremes map to 1 and 0.
class SyntheticLandscape {
public:
    SyntheticLandscape(std::uint64_t seed, Sequence target, std::size_t vocab_size,
                       std::vector<std::pair<Site, double>> linear, std::vector<PairTerm> pairwise,
                       double raw_min, double raw_max)
        : seed_(seed), target_(std::move(target)), vocab_size_(vocab_size), pairwise_(std::move(pairwise)),
          raw_min_(raw_min), raw_max_(raw_max) {
        if (!(raw_min_ < raw_max_)) throw ValidationError("landscape requires raw_min < raw_max");
        linear_table_.assign(target_.size() * vocab_size_, 0.0);
        for (const auto& [site, w] : linear) {
            check_site(site);
            linear_table_[site.pos * vocab_size_ + site.tok] += w;
            linear_.emplace_back(site, w);
        }
        for (const auto& p : pairwise_) {
            check_site(p.a);
            check_site(p.b);
        }
    }

    static SyntheticLandscape generate(const LandscapeConfig& cfg) {
        if (cfg.length < 2 || cfg.vocab_size < 2) throw ValidationError("landscape needs length, vocab >= 2");
        Rng rng(cfg.seed);
        std::uniform_int_distribution<int> tok(0, static_cast<int>(cfg.vocab_size) - 1);
        Sequence target;
        for (std::size_t i = 0; i < cfg.length; ++i) target.tokens.push_back(static_cast<Token>(tok(rng)));

        const std::size_t n_pairs =
            cfg.pairwise_terms < 0 ? 2 * cfg.length : static_cast<std::size_t>(cfg.pairwise_terms);
        std::uniform_int_distribution<std::size_t> pos(0, cfg.length - 1);
        std::uniform_real_distribution<double> pair_w(-cfg.negative_scale, cfg.positive_scale);
        std::set<std::pair<std::size_t, std::size_t>> used;
        std::vector<PairTerm> pairs;
        const std::size_t max_pairs = cfg.length * (cfg.length - 1) / 2;
        while (pairs.size() < std::min(n_pairs, max_pairs)) {
            auto i = pos(rng), j = pos(rng);
            if (i == j) continue;
            if (i > j) std::swap(i, j);
            if (!used.insert({i, j}).second) continue;
            pairs.push_back({{i, target[i]}, {j, target[j]}, pair_w(rng)});
        }
        std::uniform_real_distribution<double> base(0.5, 1.5);
        std::vector<double> a(cfg.length);
        for (auto& v : a) v = base(rng);
        for (const auto& p : pairs) {
            a[p.a.pos] += std::max(-p.weight, 0.0);
            a[p.b.pos] += std::max(-p.weight, 0.0);
        }
        std::vector<std::pair<Site, double>> linear;
        double raw_max = 0.0;
        for (std::size_t i = 0; i < cfg.length; ++i) {
            linear.push_back({{i, target[i]}, a[i]});
            raw_max += a[i];
        }
        for (const auto& p : pairs) raw_max += p.weight;
        return SyntheticLandscape(cfg.seed, std::move(target), cfg.vocab_size, std::move(linear), std::move(pairs),
                                  0.0, raw_max);
    }

    std::uint64_t seed() const { return seed_; }
    const Sequence& target_sequence() const { return target_; }
    std::size_t length() const { return target_.size(); }
    std::size_t vocab_size() const { return vocab_size_; }
    const std::vector<std::pair<Site, double>>& linear_weights() const { return linear_; }
    const std::vector<PairTerm>& pairwise_weights() const { return pairwise_; }
    double raw_min() const { return raw_min_; }
    double raw_max() const { return raw_max_; }

    double raw_fitness(const Sequence& seq) const {
        if (seq.size() != length())
            throw ValidationError("synthetic oracle: sequence length " + std::to_string(seq.size()) +
                                  " does not match landscape length " + std::to_string(length()));
        double f = 0.0;
        for (std::size_t i = 0; i < seq.size(); ++i) f += linear_table_[i * vocab_size_ + seq[i]];
        for (const auto& p : pairwise_)
            if (seq[p.a.pos] == p.a.tok && seq[p.b.pos] == p.b.tok) f += p.weight;
        return f;
    }

private:
    void check_site(const Site& s) const {
        if (s.pos >= target_.size() || s.tok >= vocab_size_) throw ValidationError("landscape site out of range");
    }

    std::uint64_t seed_;
    Sequence target_;
    std::size_t vocab_size_;
    std::vector<std::pair<Site, double>> linear_;
    std::vector<double> linear_table_;
    std::vector<PairTerm> pairwise_;
    double raw_min_;
    double raw_max_;
};

/// Exact landscape fitness, rescaled so the optimum is 1 and the minimum is 0.
inline double synthetic_oracle(const Sequence& seq, const SyntheticLandscape& landscape) {
    return (landscape.raw_fitness(seq) - landscape.raw_min()) / (landscape.raw_max() - landscape.raw_min());
}

/// Deep-mutational-scan style library around a wild type that sits `wild_type_mismatches`
/// substitutions away from the landscape optimum. Every position admits a small set of
/// alternative residues; at positions where the wild type differs from the optimum that set
/// contains the optimal residue.
struct MutantLibraryConfig {
    std::size_t size = 20000;
    std::size_t wild_type_mismatches = 10;
    std::size_t alternatives_per_position = 3;
    double mean_mutations = 5.0;
    std::size_t max_mutations = 12;
    std::uint64_t seed = 1;
};

inline Dataset generate_mutant_library(const SyntheticLandscape& landscape, const MutantLibraryConfig& cfg) {
    const std::size_t d = landscape.length();
    const std::size_t V = landscape.vocab_size();
    if (cfg.wild_type_mismatches > d || cfg.alternatives_per_position + 1 > V)
        throw ValidationError("mutant library configuration incompatible with landscape");
    Rng rng(cfg.seed);
    auto draw_other = [&](Token avoid, const std::vector<Token>& also_avoid) {
        std::uniform_int_distribution<int> tok(0, static_cast<int>(V) - 1);
        for (;;) {
            auto t = static_cast<Token>(tok(rng));
            if (t != avoid && std::find(also_avoid.begin(), also_avoid.end(), t) == also_avoid.end()) return t;
        }
    };

    Sequence wt = landscape.target_sequence();
    std::vector<std::size_t> positions(d);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    std::shuffle(positions.begin(), positions.end(), rng);
    for (std::size_t k = 0; k < cfg.wild_type_mismatches; ++k) {
        auto p = positions[k];
        wt[p] = draw_other(landscape.target_sequence()[p], {});
    }

    std::vector<std::vector<Token>> alternatives(d);
    for (std::size_t p = 0; p < d; ++p) {
        auto& alt = alternatives[p];
        if (wt[p] != landscape.target_sequence()[p]) alt.push_back(landscape.target_sequence()[p]);
        while (alt.size() < cfg.alternatives_per_position) alt.push_back(draw_other(wt[p], alt));
    }

    std::poisson_distribution<std::size_t> n_mut(cfg.mean_mutations);
    Dataset data;
    std::unordered_set<Sequence, SequenceHash> seen;
    std::size_t attempts = 0;
    while (data.n() < cfg.size) {
        if (++attempts > 50 * cfg.size) throw ValidationError("mutant library: sequence space exhausted");
        auto m = std::min(n_mut(rng), std::min(cfg.max_mutations, d));
        Sequence s = wt;
        std::shuffle(positions.begin(), positions.end(), rng);
        for (std::size_t k = 0; k < m; ++k) {
            const auto p = positions[k];
            std::uniform_int_distribution<std::size_t> pick(0, alternatives[p].size() - 1);
            s[p] = alternatives[p][pick(rng)];
        }
        if (!seen.insert(s).second) continue;
        data.records.push_back({s, synthetic_oracle(s, landscape)});
    }
    auto f = data.fitness();
    auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    data.y_min = *lo;
    data.y_max = *hi;
    return data;
}

}  // namespace vlgpo
