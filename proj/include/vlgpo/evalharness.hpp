#pragma once

// Metrics, multi-seed benchmarks, sweeps and the results directory layout.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlgpo/sampler.hpp"

namespace vlgpo {

// ---------------------------------------------------------------------------
// Metrics

/// Median with the mean of the two central values for even counts.
inline double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of empty set");
    const auto n = values.size();
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

inline double median_normalized_fitness(std::span<const Sequence> seqs, const PredictorModel& oracle,
                                        const FitnessNormalizer& normalizer) {
    if (seqs.empty()) throw ValidationError("median_normalized_fitness: empty sequence set");
    auto scores = oracle.score_batch(seqs);
    for (auto& s : scores) s = normalizer.normalize(s);
    return median(std::move(scores));
}

/// Median pairwise Levenshtein distance over unordered index-distinct pairs.
inline double diversity(std::span<const Sequence> seqs) {
    if (seqs.size() < 2) throw ValidationError("diversity: need at least 2 sequences");
    std::vector<double> d;
    d.reserve(seqs.size() * (seqs.size() - 1) / 2);
    for (std::size_t i = 0; i < seqs.size(); ++i)
        for (std::size_t j = i + 1; j < seqs.size(); ++j) d.push_back(static_cast<double>(levenshtein(seqs[i], seqs[j])));
    return median(std::move(d));
}

struct NoveltyReport {
    double value = 0.0;
    std::size_t exact_matches = 0;  // generated sequences present verbatim in the training set
};

/// Median over `seqs` of the minimum distance to any training sequence; exact copies count as 0.
inline NoveltyReport novelty(std::span<const Sequence> seqs, std::span<const Sequence> train) {
    if (seqs.empty() || train.empty()) throw ValidationError("novelty: empty input");
    NoveltyReport r;
    std::vector<double> mins;
    mins.reserve(seqs.size());
    for (const auto& s : seqs) {
        std::size_t best = std::numeric_limits<std::size_t>::max();
        for (const auto& t : train) {
            best = std::min(best, levenshtein(s, t));
            if (best == 0) break;
        }
        if (best == 0) ++r.exact_matches;
        mins.push_back(static_cast<double>(best));
    }
    r.value = median(std::move(mins));
    return r;
}

struct MetricReport {
    double median_fitness = 0.0;
    double diversity = 0.0;
    double novelty = 0.0;
    std::size_t exact_matches = 0;
    std::size_t n_sequences = 0;
    std::uint64_t seed = 0;
    bool shortfall = false;
};

inline nlohmann::json to_json(const MetricReport& m) {
    return {{"median_fitness", m.median_fitness}, {"diversity", m.diversity},       {"novelty", m.novelty},
            {"exact_matches", m.exact_matches},   {"n_sequences", m.n_sequences}, {"seed", m.seed},
            {"shortfall", m.shortfall}};
}

/// Everything the metrics need besides the generated sequences.
struct EvaluationContext {
    std::string name;
    const Dataset* train = nullptr;
    const PredictorModel* oracle = nullptr;
    FitnessNormalizer normalizer{0.0, 1.0};

    void check() const {
        if (!train || train->n() == 0) throw ValidationError("evaluation: missing training set");
        if (!oracle) throw ValidationError("evaluation: missing oracle");
    }
};

inline MetricReport evaluate_sequences(std::span<const Sequence> seqs, const EvaluationContext& ctx, std::uint64_t seed) {
    ctx.check();
    MetricReport m;
    m.seed = seed;
    m.n_sequences = seqs.size();
    m.median_fitness = median_normalized_fitness(seqs, *ctx.oracle, ctx.normalizer);
    m.diversity = seqs.size() >= 2 ? diversity(seqs) : 0.0;
    const auto train = ctx.train->sequences();
    const auto nov = novelty(seqs, train);
    m.novelty = nov.value;
    m.exact_matches = nov.exact_matches;
    return m;
}

inline MetricReport evaluate_sample(const SampleResult& r, const EvaluationContext& ctx) {
    auto m = evaluate_sequences(r.sequences, ctx, r.config.seed);
    m.shortfall = r.shortfall;
    return m;
}

// ---------------------------------------------------------------------------
// Benchmarks

struct ModelStack {
    const VaeModel* vae = nullptr;
    const FlowModel* flow = nullptr;              // unconditional prior
    const PredictorModel* predictor = nullptr;
    const FlowModel* conditional_flow = nullptr;  // learned-posterior baseline, optional

    const FlowModel& flow_for(GuidanceMode mode) const {
        if (mode == GuidanceMode::learned_posterior) {
            if (!conditional_flow) throw ValidationError("mode learned_posterior requires a conditional flow checkpoint");
            return *conditional_flow;
        }
        if (!flow) throw ValidationError("missing flow checkpoint");
        return *flow;
    }

    void check() const {
        if (!vae || !predictor) throw ValidationError("model stack: missing VAE or predictor");
    }
};

inline SampleResult sample_with(const ModelStack& stack, const SamplerConfig& cfg) {
    stack.check();
    return vlgpo_sample(cfg, stack.flow_for(cfg.mode), *stack.vae, *stack.predictor);
}

/// Protocol settings per mode: prior-only sampling is analysed without top-k selection.
inline SamplerConfig protocol_config(const SamplerConfig& base, GuidanceMode mode) {
    auto c = base.with_mode(mode);
    if (mode == GuidanceMode::unconditional) c.apply_top_k = false;
    return c;
}

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation over seeds
};

inline MetricStats mean_std(std::span<const double> v) {
    if (v.empty()) throw ValidationError("mean_std of empty set");
    MetricStats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
}

struct BenchmarkSummary {
    std::string task;
    std::string label;
    SamplerConfig config;
    ModelChecksums checksums;
    std::vector<MetricReport> per_seed;
    MetricStats fitness, diversity, novelty;

    void aggregate() {
        std::vector<double> f, d, n;
        for (const auto& m : per_seed) {
            f.push_back(m.median_fitness);
            d.push_back(m.diversity);
            n.push_back(m.novelty);
        }
        fitness = mean_std(f);
        diversity = mean_std(d);
        novelty = mean_std(n);
    }
};

inline nlohmann::json to_json(const MetricStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

inline nlohmann::json to_json(const BenchmarkSummary& b) {
    nlohmann::json j;
    j["task"] = b.task;
    j["label"] = b.label;
    j["config"] = to_json(b.config);
    j["checksums"] = {{"vae", b.checksums.vae}, {"flow", b.checksums.flow}, {"predictor", b.checksums.predictor}};
    j["per_seed"] = nlohmann::json::array();
    for (const auto& m : b.per_seed) j["per_seed"].push_back(to_json(m));
    j["fitness"] = to_json(b.fitness);
    j["diversity"] = to_json(b.diversity);
    j["novelty"] = to_json(b.novelty);
    return j;
}

/// Samples once per seed with `cfg` (seed replaced) and aggregates the metrics. Trains nothing.
inline BenchmarkSummary run_benchmark(const ModelStack& stack, const EvaluationContext& ctx, const SamplerConfig& cfg,
                                      std::span<const std::uint64_t> seeds,
                                      std::vector<SampleResult>* samples = nullptr) {
    if (seeds.empty()) throw ValidationError("run_benchmark: empty seed list");
    ctx.check();
    BenchmarkSummary s;
    s.task = ctx.name;
    s.label = to_string(cfg.mode);
    s.config = cfg;
    for (auto seed : seeds) {
        auto c = cfg;
        c.seed = seed;
        auto r = sample_with(stack, c);
        s.checksums = r.checksums;
        s.per_seed.push_back(evaluate_sample(r, ctx));
        if (samples) samples->push_back(std::move(r));
    }
    s.aggregate();
    return s;
}

inline std::string format_mean_std(const MetricStats& s, int mean_digits, int std_digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(mean_digits) << s.mean << " ± " << std::setprecision(std_digits) << s.stddev;
    return o.str();
}

/// Left-justifies to `width` display columns (UTF-8 aware, for the ± sign).
inline std::string pad(const std::string& s, std::size_t width) {
    std::size_t cols = 0;
    for (unsigned char ch : s)
        if ((ch & 0xC0) != 0x80) ++cols;
    return cols >= width ? s : s + std::string(width - cols, ' ');
}

/// Plain-text table shaped like a results table: one row per summary.
inline std::string format_table(std::span<const BenchmarkSummary> rows, const std::string& title) {
    std::size_t w = std::string("Method").size();
    for (const auto& r : rows) w = std::max(w, r.label.size());
    std::ostringstream o;
    o << title << "\n";
    o << pad("Method", w) << " | " << pad("Fitness", 12) << " | " << pad("Diversity", 12) << " | Novelty\n";
    for (const auto& r : rows)
        o << pad(r.label, w) << " | " << pad(format_mean_std(r.fitness, 2, 1), 12) << " | "
          << pad(format_mean_std(r.diversity, 1, 1), 12) << " | " << format_mean_std(r.novelty, 1, 1) << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridCell {
    double alpha = 0.0;
    std::size_t J = 0;
    std::uint64_t seed = 0;
    std::optional<MetricReport> metrics;
    std::string error;
};

struct GridResult {
    std::vector<GridCell> cells;  // alpha-major, then J, then seed
    SamplerConfig config;
};

/// One sampling run per (alpha, J, seed) cell. Failed cells keep their error and the sweep continues.
inline GridResult grid_search(const ModelStack& stack, const EvaluationContext& ctx, const SamplerConfig& cfg,
                              std::span<const double> alphas, std::span<const std::size_t> Js,
                              std::span<const std::uint64_t> seeds, std::size_t workers = 1) {
    if (alphas.empty() || Js.empty() || seeds.empty()) throw ValidationError("grid_search: empty grid");
    GridResult g;
    g.config = cfg;
    for (double a : alphas)
        for (auto J : Js)
            for (auto s : seeds) g.cells.push_back({a, J, s, std::nullopt, {}});
    parallel_for(g.cells.size(), workers, [&](std::size_t i) {
        auto& cell = g.cells[i];
        auto c = cfg.with_mode(GuidanceMode::manifold);
        c.alpha = cell.alpha;
        c.J = cell.J;
        c.seed = cell.seed;
        c.workers = 1;
        try {
            cell.metrics = evaluate_sample(sample_with(stack, c), ctx);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });
    return g;
}

inline std::string grid_csv(const GridResult& g) {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "alpha,J,seed,median_fitness,diversity,novelty,n_sequences,status,error\n";
    for (const auto& c : g.cells) {
        o << c.alpha << "," << c.J << "," << c.seed << ",";
        if (c.metrics)
            o << c.metrics->median_fitness << "," << c.metrics->diversity << "," << c.metrics->novelty << ","
              << c.metrics->n_sequences << ",ok,\n";
        else {
            std::string err = c.error;
            std::replace(err.begin(), err.end(), '"', '\'');
            o << ",,,,failed,\"" << err << "\"\n";
        }
    }
    return o.str();
}

struct ExtrapolationRow {
    GuidanceMode mode = GuidanceMode::manifold;
    double target_y = 0.0;
    std::uint64_t seed = 0;
    double y_gt = 0.0;  // median normalized oracle fitness of the raw decoded batch
    std::size_t n_sequences = 0;
};

/// Raw decoded batches (no dedup, no top-k) for every (mode, y, seed).
inline std::vector<ExtrapolationRow> extrapolation_experiment(const ModelStack& stack, const EvaluationContext& ctx,
                                                              const SamplerConfig& cfg, std::span<const double> ys,
                                                              std::span<const GuidanceMode> modes,
                                                              std::span<const std::uint64_t> seeds) {
    ctx.check();
    for (auto m : modes) {
        if (m != GuidanceMode::manifold && m != GuidanceMode::learned_posterior)
            throw ValidationError("extrapolation: modes must be manifold or learned_posterior");
        stack.flow_for(m);
    }
    std::vector<ExtrapolationRow> rows;
    for (auto m : modes)
        for (double y : ys)
            for (auto s : seeds) {
                auto c = cfg.with_mode(m);
                c.target_y = y;
                c.seed = s;
                auto r = sample_with(stack, c);
                rows.push_back({m, y, s, median_normalized_fitness(r.raw_sequences, *ctx.oracle, ctx.normalizer),
                                r.raw_sequences.size()});
            }
    return rows;
}

struct OdeSweepRow {
    std::size_t K = 0;
    MetricReport metrics;
};

inline std::vector<OdeSweepRow> ode_steps_sweep(const ModelStack& stack, const EvaluationContext& ctx,
                                                const SamplerConfig& cfg, std::span<const std::size_t> Ks) {
    std::vector<OdeSweepRow> rows;
    for (auto K : Ks) {
        if (K < 1) throw ValidationError("ode_steps_sweep: K must be >= 1");
        auto c = cfg;
        c.K = K;
        rows.push_back({K, evaluate_sample(sample_with(stack, c), ctx)});
    }
    return rows;
}

/// Seed-matched {manifold, naive, learned_posterior} comparison.
inline std::vector<BenchmarkSummary> ablation(const ModelStack& stack, const EvaluationContext& ctx,
                                              const SamplerConfig& cfg, std::span<const std::uint64_t> seeds) {
    std::vector<BenchmarkSummary> rows;
    const std::pair<GuidanceMode, const char*> variants[] = {{GuidanceMode::manifold, "manifold constraint"},
                                                             {GuidanceMode::naive, "w/o manifold constraint"},
                                                             {GuidanceMode::learned_posterior, "learned posterior"}};
    for (const auto& [mode, label] : variants) {
        auto s = run_benchmark(stack, ctx, protocol_config(cfg, mode), seeds);
        s.label = label;
        rows.push_back(std::move(s));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

inline DifficultySpec difficulty_from_string(const std::string& s) {
    if (s == "medium") return DifficultySpec::medium();
    if (s == "hard") return DifficultySpec::hard();
    throw ValidationError("invalid difficulty '" + s + "'; expected medium or hard");
}

struct SyntheticTaskConfig {
    std::string difficulty = "hard";
    LandscapeConfig landscape{.seed = 7};
    MutantLibraryConfig library;
};

struct SyntheticTask {
    std::string name;
    SyntheticLandscape landscape;
    Dataset full;
    Dataset train;

    FitnessNormalizer normalizer() const { return full.normalizer(); }
    PredictorModel oracle() const { return train_oracle(landscape); }
};

/// Generates the landscape and the full mutant set, then keeps the difficulty-filtered subset.
inline SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg) {
    auto spec = difficulty_from_string(cfg.difficulty);
    auto landscape = SyntheticLandscape::generate(cfg.landscape);
    auto full = generate_mutant_library(landscape, cfg.library);
    auto train = difficulty_filter(full, spec);
    return {"synthetic-" + cfg.difficulty, std::move(landscape), std::move(full), std::move(train)};
}

// ---------------------------------------------------------------------------
// Results directory: <root>/<task>/<experiment>/<timestamp>/{summary.json, cells.csv, samples/*.json}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

class ResultsWriter {
public:
    ResultsWriter(const std::filesystem::path& root, const std::string& task, const std::string& experiment,
                  nlohmann::json provenance)
        : provenance_(std::move(provenance)) {
        const auto base = root / task / experiment;
        const auto stamp = utc_timestamp();
        dir_ = base / stamp;
        for (int k = 1; std::filesystem::exists(dir_); ++k) dir_ = base / (stamp + "-" + std::to_string(k));
        std::error_code ec;
        std::filesystem::create_directories(dir_ / "samples", ec);
        if (ec) throw IoError("cannot create results directory " + dir_.string() + ": " + ec.message());
    }

    const std::filesystem::path& directory() const { return dir_; }

    void write_summary(nlohmann::json body) const {
        body["provenance"] = provenance_;
        write_text(dir_ / "summary.json", body.dump(2) + "\n");
    }

    /// CSV body preceded by '#' comment lines carrying the provenance.
    void write_cells(const std::string& csv) const {
        write_text(dir_ / "cells.csv", "# provenance: " + provenance_.dump() + "\n" + csv);
    }

    void write_sample(const std::string& name, nlohmann::json body) const {
        body["provenance"] = provenance_;
        write_text(dir_ / "samples" / (name + ".json"), body.dump(2) + "\n");
    }

    static void write_text(const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out) throw IoError("write failed: " + path.string());
    }

private:
    std::filesystem::path dir_;
    nlohmann::json provenance_;
};

}  // namespace vlgpo
