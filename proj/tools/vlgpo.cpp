// vlgpo command-line entry point: training, sampling and evaluation sweeps.
//
// Exit codes: 0 success, 1 validation error, 2 runtime divergence, 3 I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vlgpo/config.hpp"

namespace fs = std::filesystem;
using namespace vlgpo;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> results_dir;
    std::optional<std::size_t> parallelism;
};

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig c = g.config_path.empty() ? default_run_config() : load_run_config(g.config_path);
    if (g.seed) c.seed = *g.seed;
    if (g.results_dir) c.paths.results = *g.results_dir;
    if (g.parallelism) {
        if (*g.parallelism < 1) throw ValidationError("--parallelism must be >= 1");
        c.parallelism = *g.parallelism;
    }
    c.sampler.workers = c.parallelism;
    return c;
}

/// Training data, evaluation oracle and normalizer for the configured task.
struct TaskData {
    std::string name;
    Dataset train;
    FitnessNormalizer normalizer{0.0, 1.0};
    std::optional<PredictorModel> oracle;
};

TaskData load_task(const RunConfig& c) {
    if (c.task.synthetic()) {
        SyntheticTaskConfig tc;
        tc.difficulty = c.task.name == "synthetic-medium" ? "medium" : "hard";
        tc.landscape.seed = c.task.landscape_seed;
        tc.library.seed = c.task.library_seed;
        tc.library.size = c.task.library_size;
        auto t = make_synthetic_task(tc);
        return {t.name, t.train, t.normalizer(), t.oracle()};
    }
    std::optional<FitnessNormalizer> range;
    if (!c.task.range.empty()) range = read_range_file(c.task.range);
    auto data = load_csv(c.task.data, Vocabulary::amino_acids(), range);
    TaskData t{"csv-" + c.task.data.stem().string(), data, data.normalizer(), std::nullopt};
    if (!c.task.oracle.empty()) t.oracle = load_external_predictor(c.task.oracle, PredictorRole::oracle);
    return t;
}

VaeConfig vae_config_for(const RunConfig& c, const Dataset& data) {
    VaeConfig v = c.vae;
    v.length = data.length();
    v.vocab_size = Vocabulary::amino_acids().size();
    return v;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw ValidationError("missing " + what + " checkpoint: " + p.string());
}

/// Checkpoints loaded for sampling; the conditional flow is optional.
struct LoadedModels {
    VaeModel vae;
    std::optional<FlowModel> flow;
    std::optional<FlowModel> conditional_flow;
    PredictorModel predictor;

    ModelStack stack() const {
        return {&vae, flow ? &*flow : nullptr, &predictor, conditional_flow ? &*conditional_flow : nullptr};
    }
};

LoadedModels load_models(const RunConfig& c, bool need_unconditional, bool need_conditional) {
    require_file(c.vae_checkpoint(), "VAE");
    require_file(c.predictor_checkpoint(), "predictor");
    auto vae = VaeModel::from_checkpoint(load_checkpoint(c.vae_checkpoint()));
    auto pred = PredictorModel::from_checkpoint(load_checkpoint(c.predictor_checkpoint()));
    std::optional<FlowModel> flow, cond;
    if (need_unconditional || fs::exists(c.flow_checkpoint(false))) {
        require_file(c.flow_checkpoint(false), "flow");
        flow = FlowModel::from_checkpoint(load_checkpoint(c.flow_checkpoint(false)));
    }
    if (need_conditional || fs::exists(c.flow_checkpoint(true))) {
        require_file(c.flow_checkpoint(true), "conditional flow");
        cond = FlowModel::from_checkpoint(load_checkpoint(c.flow_checkpoint(true)));
    }
    return {std::move(vae), std::move(flow), std::move(cond), std::move(pred)};
}

EvaluationContext evaluation_context(const TaskData& t) {
    if (!t.oracle) throw ValidationError("task " + t.name + " has no oracle; set [task] oracle to a checkpoint");
    return {t.name, &t.train, &*t.oracle, t.normalizer};
}

nlohmann::json provenance(const RunConfig& c, const LoadedModels* m) {
    nlohmann::json p;
    p["config"] = to_json(c);
    if (m) {
        p["checksums"] = {{"vae", m->vae.checksum()}, {"predictor", m->predictor.checksum()}};
        if (m->flow) p["checksums"]["flow"] = m->flow->checksum();
        if (m->conditional_flow) p["checksums"]["flow_conditional"] = m->conditional_flow->checksum();
    }
    return p;
}

ResultsWriter open_results(const RunConfig& c, const GlobalOptions& g, const TaskData& t, const std::string& experiment,
                           const LoadedModels* m) {
    ResultsWriter w(c.paths.results, t.name, experiment, provenance(c, m));
    if (!g.config_path.empty()) {
        std::error_code ec;
        fs::copy_file(g.config_path, w.directory() / "config.ini", ec);
        if (ec) throw IoError("cannot copy config into results: " + ec.message());
    }
    return w;
}

// --- commands -------------------------------------------------------------

void cmd_train_vae(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    auto [train, holdout] = split_holdout(t.train, c.task.holdout, derive_seed(c.seed, 100));
    auto res = train_vae(train, vae_config_for(c, t.train), c.seed, holdout.n() ? &holdout : nullptr);
    save_checkpoint(c.vae_checkpoint(), res.model.to_checkpoint());
    auto report = to_json(res.report);
    report["checksum"] = res.model.checksum();
    write_json(c.paths.checkpoints / "vae_report.json", report);
    std::cout << "vae: train accuracy " << res.report.train_accuracy;
    if (res.report.validation_accuracy) std::cout << ", held-out accuracy " << *res.report.validation_accuracy;
    std::cout << "\nwrote " << c.vae_checkpoint().string() << " (" << res.model.checksum() << ")\n";
}

void cmd_train_prior(const GlobalOptions& g, bool conditional_flag) {
    auto c = resolve_config(g);
    const bool conditional = conditional_flag || c.flow.conditional;
    if (!fs::exists(c.vae_checkpoint()))
        throw ValidationError("missing VAE checkpoint " + c.vae_checkpoint().string() + "; run train-vae first");
    auto vae = VaeModel::from_checkpoint(load_checkpoint(c.vae_checkpoint()));
    if (vae.latent_dim() != c.flow.latent_dim)
        throw ValidationError("VAE checkpoint latent dimension " + std::to_string(vae.latent_dim()) +
                              " does not match [flow] latent_dim " + std::to_string(c.flow.latent_dim));
    auto t = load_task(c);
    auto latents = encode_dataset(vae, t.train, derive_seed(c.seed, 101));
    auto arch = c.flow;
    arch.conditional = conditional;
    auto train_cfg = c.flow_train;
    train_cfg.seed = c.seed;
    std::vector<double> labels;
    if (conditional) labels = t.train.normalized().fitness();
    auto res = train_flow(latents, labels, train_cfg, arch);
    const auto path = c.flow_checkpoint(conditional);
    save_checkpoint(path, res.model.to_checkpoint());
    auto report = to_json(res.report);
    report["checksum"] = res.model.checksum();
    report["conditional"] = conditional;
    report["vae_checksum"] = vae.checksum();
    write_json(c.paths.checkpoints / (conditional ? "flow_conditional_report.json" : "flow_report.json"), report);
    std::cout << "flow" << (conditional ? " (conditional)" : "") << ": final epoch loss "
              << (res.report.epoch_loss.empty() ? 0.0 : res.report.epoch_loss.back()) << "\nwrote " << path.string()
              << " (" << res.model.checksum() << ")\n";
}

void cmd_train_predictor(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    if (!c.predictor.external.empty()) {
        auto model = load_external_predictor(c.predictor.external, c.predictor.role);
        if (model.length() != t.train.length())
            throw ValidationError("external predictor length does not match task sequences");
        save_predictor(c.predictor_checkpoint(), model);
        std::cout << "imported external predictor into " << c.predictor_checkpoint().string() << "\n";
        return;
    }
    Dataset data = t.train.normalized();
    if (c.predictor.smoothing_k > 0) data = smooth_labels_knn(data, c.predictor.smoothing_k);
    auto cfg = c.predictor.model;
    cfg.length = data.length();
    cfg.vocab_size = Vocabulary::amino_acids().size();
    auto res = train_predictor(data, cfg, c.seed, c.predictor.role);
    save_predictor(c.predictor_checkpoint(), res.model);
    auto report = to_json(res.report);
    report["checksum"] = res.model.checksum();
    report["role"] = to_string(c.predictor.role);
    write_json(c.paths.checkpoints / "predictor_report.json", report);
    std::cout << "predictor: training MSE " << res.report.train_mse << "\nwrote " << c.predictor_checkpoint().string()
              << " (" << res.model.checksum() << ")\n";
}

struct SampleOverrides {
    std::optional<std::string> mode;
    std::optional<std::size_t> top_k, batch, J, K;
    std::optional<double> alpha, target_y;
    std::string output;
};

void cmd_sample(const GlobalOptions& g, const SampleOverrides& o) {
    auto c = resolve_config(g);
    auto cfg = c.sampler;
    if (o.mode) cfg = cfg.with_mode(guidance_mode_from_string(*o.mode));
    if (o.top_k) cfg.top_k = *o.top_k;
    if (o.batch) cfg.batch = *o.batch;
    if (o.K) cfg.K = *o.K;
    if (cfg.mode != GuidanceMode::unconditional) {
        if (o.J) cfg.J = *o.J;
        if (o.alpha) cfg.alpha = *o.alpha;
    }
    if (o.target_y) cfg.target_y = *o.target_y;
    cfg.seed = c.seed;
    cfg.validate();
    auto t = load_task(c);
    auto m = load_models(c, cfg.mode != GuidanceMode::learned_posterior, cfg.mode == GuidanceMode::learned_posterior);
    auto r = sample_with(m.stack(), cfg);
    auto j = to_json(r, Vocabulary::amino_acids());
    if (t.oracle) j["metrics"] = to_json(evaluate_sample(r, evaluation_context(t)));
    fs::path out;
    if (!o.output.empty()) {
        out = o.output;
        j["provenance"] = provenance(c, &m);
        write_json(out, j);
    } else {
        auto w = open_results(c, g, t, "sample", &m);
        w.write_sample("sample", j);
        out = w.directory() / "samples" / "sample.json";
    }
    std::cout << "sampled " << r.sequences.size() << " unique sequences (mode " << to_string(cfg.mode) << ")";
    if (r.shortfall) std::cout << " [shortfall: fewer than top_k unique decodes]";
    std::cout << "\nwrote " << out.string() << "\n";
}

void cmd_evaluate(const GlobalOptions& g, const std::optional<std::string>& mode_override) {
    auto c = resolve_config(g);
    const auto mode = mode_override ? guidance_mode_from_string(*mode_override) : c.sampler.mode;
    auto t = load_task(c);
    auto ctx = evaluation_context(t);
    auto m = load_models(c, mode != GuidanceMode::learned_posterior, mode == GuidanceMode::learned_posterior);
    std::vector<SampleResult> samples;
    auto s = run_benchmark(m.stack(), ctx, protocol_config(c.sampler, mode), c.eval.seeds, &samples);
    auto w = open_results(c, g, t, "evaluate", &m);
    const auto table = format_table(std::span(&s, 1), t.name + " optimization results.");
    auto j = to_json(s);
    j["table"] = table;
    w.write_summary(j);
    std::ostringstream csv;
    csv << std::setprecision(17) << "seed,median_fitness,diversity,novelty,exact_matches,n_sequences,shortfall\n";
    for (const auto& r : s.per_seed)
        csv << r.seed << "," << r.median_fitness << "," << r.diversity << "," << r.novelty << "," << r.exact_matches
            << "," << r.n_sequences << "," << (r.shortfall ? "true" : "false") << "\n";
    w.write_cells(csv.str());
    for (const auto& r : samples) w.write_sample("seed_" + std::to_string(r.config.seed), to_json(r, Vocabulary::amino_acids()));
    std::cout << table << "wrote " << w.directory().string() << "\n";
}

void cmd_gridsearch(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    auto ctx = evaluation_context(t);
    auto m = load_models(c, true, false);
    auto grid = grid_search(m.stack(), ctx, c.sampler, c.eval.alpha_grid, c.eval.J_grid, c.eval.grid_seeds, c.parallelism);
    auto w = open_results(c, g, t, "gridsearch", &m);
    w.write_cells(grid_csv(grid));
    nlohmann::json j;
    j["alpha_grid"] = c.eval.alpha_grid;
    j["J_grid"] = c.eval.J_grid;
    j["cells"] = nlohmann::json::array();
    std::size_t failed = 0;
    for (const auto& cell : grid.cells) {
        nlohmann::json e{{"alpha", cell.alpha}, {"J", cell.J}, {"seed", cell.seed}};
        if (cell.metrics) e["metrics"] = to_json(*cell.metrics);
        else {
            e["error"] = cell.error;
            ++failed;
        }
        j["cells"].push_back(e);
    }
    j["failed_cells"] = failed;
    w.write_summary(j);
    std::cout << "grid search: " << grid.cells.size() << " cells, " << failed << " failed\nwrote "
              << w.directory().string() << "\n";
}

void cmd_extrapolate(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    auto ctx = evaluation_context(t);
    auto m = load_models(c, true, true);
    const GuidanceMode modes[] = {GuidanceMode::manifold, GuidanceMode::learned_posterior};
    auto rows = extrapolation_experiment(m.stack(), ctx, c.sampler, c.eval.y_grid, modes, c.eval.seeds);
    auto w = open_results(c, g, t, "extrapolate", &m);
    std::ostringstream csv;
    csv << std::setprecision(17) << "mode,target_y,seed,y_gt,n_sequences\n";
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        csv << to_string(r.mode) << "," << r.target_y << "," << r.seed << "," << r.y_gt << "," << r.n_sequences << "\n";
        j["rows"].push_back({{"mode", to_string(r.mode)}, {"target_y", r.target_y}, {"seed", r.seed}, {"y_gt", r.y_gt}});
    }
    w.write_cells(csv.str());
    w.write_summary(j);
    std::cout << "extrapolation: " << rows.size() << " rows\nwrote " << w.directory().string() << "\n";
}

void cmd_ode_sweep(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    auto ctx = evaluation_context(t);
    auto m = load_models(c, true, false);
    auto cfg = c.sampler;
    cfg.seed = c.seed;
    auto rows = ode_steps_sweep(m.stack(), ctx, cfg, c.eval.K_grid);
    auto w = open_results(c, g, t, "ode-sweep", &m);
    std::ostringstream csv;
    csv << std::setprecision(17) << "K,median_fitness,diversity,novelty,n_sequences\n";
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        csv << r.K << "," << r.metrics.median_fitness << "," << r.metrics.diversity << "," << r.metrics.novelty << ","
            << r.metrics.n_sequences << "\n";
        j["rows"].push_back({{"K", r.K}, {"metrics", to_json(r.metrics)}});
    }
    w.write_cells(csv.str());
    w.write_summary(j);
    std::cout << "ODE-steps sweep: " << rows.size() << " rows\nwrote " << w.directory().string() << "\n";
}

void cmd_ablate(const GlobalOptions& g) {
    auto c = resolve_config(g);
    auto t = load_task(c);
    auto ctx = evaluation_context(t);
    auto m = load_models(c, true, true);
    auto rows = ablation(m.stack(), ctx, c.sampler, c.eval.seeds);
    auto w = open_results(c, g, t, "ablate", &m);
    const auto table = format_table(rows, "Influence of manifold constrained gradient (" + t.name + ")");
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) j["rows"].push_back(to_json(r));
    j["table"] = table;
    w.write_summary(j);
    std::ostringstream csv;
    csv << std::setprecision(17) << "method,seed,median_fitness,diversity,novelty\n";
    for (const auto& r : rows)
        for (const auto& s : r.per_seed)
            csv << '"' << r.label << "\"," << s.seed << "," << s.median_fitness << "," << s.diversity << "," << s.novelty
                << "\n";
    w.write_cells(csv.str());
    std::cout << table << "wrote " << w.directory().string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vlgpo: latent-space flow-matching guided protein sequence optimization"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("-c,--config", g.config_path, "INI run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--results-dir", g.results_dir, "Root directory for results");
    app.add_option("--parallelism", g.parallelism, "Worker threads");

    auto* train_vae_cmd = app.add_subcommand("train-vae", "Train the sequence VAE");
    bool conditional = false;
    auto* train_prior_cmd = app.add_subcommand("train-prior", "Train the latent flow-matching prior");
    train_prior_cmd->add_flag("--conditional", conditional, "Fitness-conditioned flow for the learned-posterior baseline");
    auto* train_pred_cmd = app.add_subcommand("train-predictor", "Train (or import) the fitness predictor");

    SampleOverrides so;
    auto* sample_cmd = app.add_subcommand("sample", "Draw guided samples");
    sample_cmd->add_option("--mode", so.mode, "manifold | naive | unconditional | learned_posterior");
    sample_cmd->add_option("--top-k", so.top_k, "Number of ranked unique sequences kept");
    sample_cmd->add_option("--batch", so.batch, "Number of sampling chains");
    sample_cmd->add_option("--alpha", so.alpha, "Guidance strength");
    sample_cmd->add_option("--J", so.J, "Guidance steps per ODE step");
    sample_cmd->add_option("--K", so.K, "ODE steps");
    sample_cmd->add_option("--target-y", so.target_y, "Target normalized fitness");
    sample_cmd->add_option("-o,--output", so.output, "Write the sample JSON here instead of the results tree");

    std::optional<std::string> eval_mode;
    auto* eval_cmd = app.add_subcommand("evaluate", "Multi-seed benchmark");
    eval_cmd->add_option("--mode", eval_mode, "manifold | naive | unconditional | learned_posterior");
    auto* grid_cmd = app.add_subcommand("gridsearch", "Grid over alpha and J");
    auto* extra_cmd = app.add_subcommand("extrapolate", "Target-fitness extrapolation sweep");
    auto* ode_cmd = app.add_subcommand("ode-sweep", "Sweep over the number of ODE steps");
    auto* ablate_cmd = app.add_subcommand("ablate", "Manifold / naive / learned-posterior comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train_vae_cmd) cmd_train_vae(g);
        else if (*train_prior_cmd) cmd_train_prior(g, conditional);
        else if (*train_pred_cmd) cmd_train_predictor(g);
        else if (*sample_cmd) cmd_sample(g, so);
        else if (*eval_cmd) cmd_evaluate(g, eval_mode);
        else if (*grid_cmd) cmd_gridsearch(g);
        else if (*extra_cmd) cmd_extrapolate(g);
        else if (*ode_cmd) cmd_ode_sweep(g);
        else if (*ablate_cmd) cmd_ablate(g);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
