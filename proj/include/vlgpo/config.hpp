#pragma once

// Run configuration: one INI file with sections, validated as a whole.
//
//   [task]       name = synthetic-hard | synthetic-medium | csv, data, range, oracle,
//                landscape_seed, library_seed, library_size, holdout
//   [paths]      checkpoints, results
//   [vae]        latent_dim, beta, learning_rate, epochs, batch_size, conv_channels, hidden, kernel
//   [flow]       latent_dim, embedding_dim, max_frequency, hidden, depth, learning_rate, epochs,
//                batch_size, conditional
//   [predictor]  channels, kernel, hidden, learning_rate, epochs, batch_size, role, smoothing_k, external
//   [sampler]    K, J, alpha, target_y, batch, top_k, mode, objective, temperature
//   [eval]       seeds, alpha_grid, J_grid, y_grid, K_grid, grid_seeds
//   [run]        seed, parallelism
//
// Path values may reference environment variables as ${NAME}; hyperparameters may not.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vlgpo/evalharness.hpp"

namespace vlgpo {

struct PathsConfig {
    std::filesystem::path checkpoints = "checkpoints";
    std::filesystem::path results = "results";
};

struct TaskConfig {
    std::string name = "synthetic-hard";
    std::filesystem::path data;    // csv only
    std::filesystem::path range;   // optional y_min/y_max file for csv
    std::filesystem::path oracle;  // csv only: oracle checkpoint
    std::uint64_t landscape_seed = 7;
    std::uint64_t library_seed = 1;
    std::size_t library_size = 20000;
    double holdout = 0.1;

    bool synthetic() const { return name != "csv"; }
};

struct EvalConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<double> alpha_grid{0.0, 0.5, 2.0, 8.0};
    std::vector<std::size_t> J_grid{0, 1, 5, 10};
    std::vector<double> y_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::size_t> K_grid{4, 8, 16, 24, 32};
    std::vector<std::uint64_t> grid_seeds{0};
};

struct PredictorSection {
    PredictorConfig model;
    PredictorRole role = PredictorRole::predictor;
    std::size_t smoothing_k = 0;     // >0: k-NN label smoothing over Levenshtein neighbours
    std::filesystem::path external;  // pre-trained checkpoint used instead of training
};

struct RunConfig {
    TaskConfig task;
    PathsConfig paths;
    VaeConfig vae;
    FlowArchitecture flow;
    FlowTrainConfig flow_train;
    PredictorSection predictor;
    SamplerConfig sampler;
    EvalConfig eval;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;

    std::filesystem::path vae_checkpoint() const { return paths.checkpoints / "vae.json"; }
    std::filesystem::path flow_checkpoint(bool conditional) const {
        return paths.checkpoints / (conditional ? "flow_conditional.json" : "flow.json");
    }
    std::filesystem::path predictor_checkpoint() const { return paths.checkpoints / "predictor.json"; }
};

namespace detail {

inline std::string expand_env(const std::string& s, std::vector<std::string>& issues) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
            const auto end = s.find('}', i + 2);
            if (end == std::string::npos) {
                issues.push_back("unterminated ${ in '" + s + "'");
                return s;
            }
            const auto name = s.substr(i + 2, end - i - 2);
            const char* v = std::getenv(name.c_str());
            if (!v) issues.push_back("environment variable " + name + " is not set");
            out += v ? v : "";
            i = end;
        } else {
            out += s[i];
        }
    }
    return out;
}

/// Reads typed values out of a ptree and records every problem instead of stopping at the first.
class SectionReader {
public:
    SectionReader(const boost::property_tree::ptree& root, std::vector<std::string>& issues)
        : root_(root), issues_(issues) {}

    template <class T>
    void get(const std::string& section, const std::string& key, T& out) {
        used_.insert(section + "." + key);
        auto node = root_.get_child_optional(boost::property_tree::ptree::path_type(section + "." + key, '.'));
        if (!node) return;
        const auto text = std::string(trim(node->data()));
        if constexpr (std::is_same_v<T, std::string>) {
            out = text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes") out = true;
            else if (text == "false" || text == "0" || text == "no") out = false;
            else bad(section, key, text, "a boolean");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (auto v = parse_real(text)) out = *v;
            else bad(section, key, text, "a real number");
        } else {
            if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
                bad(section, key, text, "a non-negative integer");
                return;
            }
            try {
                out = static_cast<T>(std::stoull(text));
            } catch (const std::exception&) {
                bad(section, key, text, "a non-negative integer");
            }
        }
    }

    void get_path(const std::string& section, const std::string& key, std::filesystem::path& out) {
        std::string s;
        get(section, key, s);
        if (!s.empty()) out = expand_env(s, issues_);
    }

    template <class T>
    void get_list(const std::string& section, const std::string& key, std::vector<T>& out) {
        std::string s;
        get(section, key, s);
        if (s.empty()) return;
        std::vector<T> values;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto t = std::string(trim(item));
            if constexpr (std::is_floating_point_v<T>) {
                if (auto v = parse_real(t)) values.push_back(*v);
                else return bad(section, key, t, "a list of reals");
            } else {
                if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
                    return bad(section, key, t, "a list of non-negative integers");
                values.push_back(static_cast<T>(std::stoull(t)));
            }
        }
        out = std::move(values);
    }

    void report_unknown() {
        for (const auto& [section, body] : root_) {
            if (body.empty() && !body.data().empty()) {
                issues_.push_back("key '" + section + "' outside any section");
                continue;
            }
            for (const auto& [key, value] : body)
                if (!used_.count(section + "." + key)) issues_.push_back("unknown key [" + section + "] " + key);
        }
    }

private:
    void bad(const std::string& section, const std::string& key, const std::string& text, const char* what) {
        issues_.push_back("[" + section + "] " + key + " = '" + text + "' is not " + what);
    }

    const boost::property_tree::ptree& root_;
    std::vector<std::string>& issues_;
    std::set<std::string> used_;
};

}  // namespace detail

/// Semantic checks across sections; returns the list of problems (empty when valid).
inline std::vector<std::string> validate_run_config(const RunConfig& c) {
    std::vector<std::string> issues;
    auto check = [&](auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            issues.emplace_back(e.what());
        }
    };
    if (c.task.name != "synthetic-hard" && c.task.name != "synthetic-medium" && c.task.name != "csv")
        issues.push_back("[task] name must be synthetic-medium, synthetic-hard or csv");
    if (c.task.name == "csv") {
        if (c.task.data.empty()) issues.push_back("[task] data is required for csv tasks");
        else if (!std::filesystem::exists(c.task.data)) issues.push_back("[task] data file not found: " + c.task.data.string());
        if (!c.task.range.empty() && !std::filesystem::exists(c.task.range))
            issues.push_back("[task] range file not found: " + c.task.range.string());
        if (!c.task.oracle.empty() && !std::filesystem::exists(c.task.oracle))
            issues.push_back("[task] oracle checkpoint not found: " + c.task.oracle.string());
    }
    if (!(c.task.holdout >= 0.0 && c.task.holdout < 1.0)) issues.push_back("[task] holdout must lie in [0, 1)");
    if (c.task.library_size < 100) issues.push_back("[task] library_size must be >= 100");
    if (!c.predictor.external.empty() && !std::filesystem::exists(c.predictor.external))
        issues.push_back("[predictor] external checkpoint not found: " + c.predictor.external.string());
    check([&] { c.vae.validate(); });
    check([&] { c.flow.validate(); });
    check([&] { c.flow_train.validate(); });
    check([&] { c.predictor.model.validate(); });
    check([&] { c.sampler.validate(); });
    if (c.flow.latent_dim != c.vae.latent_dim)
        issues.push_back("latent dimensions disagree: [vae] latent_dim = " + std::to_string(c.vae.latent_dim) +
                         ", [flow] latent_dim = " + std::to_string(c.flow.latent_dim));
    if (c.eval.seeds.empty()) issues.push_back("[eval] seeds must not be empty");
    if (c.eval.alpha_grid.empty() || c.eval.J_grid.empty()) issues.push_back("[eval] grids must not be empty");
    for (double a : c.eval.alpha_grid)
        if (a < 0.0) issues.push_back("[eval] alpha_grid values must be >= 0");
    for (auto K : c.eval.K_grid)
        if (K < 1) issues.push_back("[eval] K_grid values must be >= 1");
    if (c.parallelism < 1) issues.push_back("[run] parallelism must be >= 1");
    return issues;
}

inline RunConfig parse_run_config(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    std::vector<std::string> issues;
    detail::SectionReader r(tree, issues);
    RunConfig c;

    r.get("task", "name", c.task.name);
    r.get_path("task", "data", c.task.data);
    r.get_path("task", "range", c.task.range);
    r.get_path("task", "oracle", c.task.oracle);
    r.get("task", "landscape_seed", c.task.landscape_seed);
    r.get("task", "library_seed", c.task.library_seed);
    r.get("task", "library_size", c.task.library_size);
    r.get("task", "holdout", c.task.holdout);

    r.get_path("paths", "checkpoints", c.paths.checkpoints);
    r.get_path("paths", "results", c.paths.results);

    r.get("vae", "latent_dim", c.vae.latent_dim);
    r.get("vae", "beta", c.vae.beta);
    r.get("vae", "learning_rate", c.vae.learning_rate);
    r.get("vae", "epochs", c.vae.epochs);
    r.get("vae", "batch_size", c.vae.batch_size);
    r.get("vae", "conv_channels", c.vae.conv_channels);
    r.get("vae", "hidden", c.vae.hidden);
    r.get("vae", "kernel", c.vae.kernel);

    c.flow.latent_dim = c.vae.latent_dim;
    r.get("flow", "latent_dim", c.flow.latent_dim);
    r.get("flow", "embedding_dim", c.flow.embedding_dim);
    r.get("flow", "max_frequency", c.flow.max_frequency);
    r.get("flow", "hidden", c.flow.hidden);
    r.get("flow", "depth", c.flow.depth);
    r.get("flow", "conditional", c.flow.conditional);
    r.get("flow", "learning_rate", c.flow_train.learning_rate);
    r.get("flow", "epochs", c.flow_train.epochs);
    r.get("flow", "batch_size", c.flow_train.batch_size);

    r.get("predictor", "channels", c.predictor.model.channels);
    r.get("predictor", "kernel", c.predictor.model.kernel);
    r.get("predictor", "hidden", c.predictor.model.hidden);
    r.get("predictor", "learning_rate", c.predictor.model.learning_rate);
    r.get("predictor", "epochs", c.predictor.model.epochs);
    r.get("predictor", "batch_size", c.predictor.model.batch_size);
    std::string role;
    r.get("predictor", "role", role);
    if (!role.empty()) {
        try {
            c.predictor.role = predictor_role_from_string(role);
        } catch (const ValidationError& e) {
            issues.emplace_back(e.what());
        }
    }
    r.get("predictor", "smoothing_k", c.predictor.smoothing_k);
    r.get_path("predictor", "external", c.predictor.external);

    r.get("sampler", "K", c.sampler.K);
    r.get("sampler", "J", c.sampler.J);
    r.get("sampler", "alpha", c.sampler.alpha);
    r.get("sampler", "target_y", c.sampler.target_y);
    r.get("sampler", "batch", c.sampler.batch);
    r.get("sampler", "top_k", c.sampler.top_k);
    r.get("sampler", "temperature", c.sampler.temperature);
    std::string mode, objective;
    r.get("sampler", "mode", mode);
    r.get("sampler", "objective", objective);
    try {
        if (!mode.empty()) c.sampler = c.sampler.with_mode(guidance_mode_from_string(mode));
    } catch (const ValidationError& e) {
        issues.emplace_back(e.what());
    }
    try {
        if (!objective.empty()) c.sampler.objective = guidance_objective_from_string(objective);
    } catch (const ValidationError& e) {
        issues.emplace_back(e.what());
    }

    r.get_list("eval", "seeds", c.eval.seeds);
    r.get_list("eval", "alpha_grid", c.eval.alpha_grid);
    r.get_list("eval", "J_grid", c.eval.J_grid);
    r.get_list("eval", "y_grid", c.eval.y_grid);
    r.get_list("eval", "K_grid", c.eval.K_grid);
    r.get_list("eval", "grid_seeds", c.eval.grid_seeds);

    r.get("run", "seed", c.seed);
    r.get("run", "parallelism", c.parallelism);
    r.report_unknown();

    for (auto& i : validate_run_config(c)) issues.push_back(std::move(i));
    if (!issues.empty()) {
        std::string msg = "invalid configuration (" + std::to_string(issues.size()) + " problem" +
                          (issues.size() == 1 ? "" : "s") + "):";
        for (const auto& i : issues) msg += "\n  - " + i;
        throw ValidationError(msg);
    }
    c.sampler.workers = c.parallelism;
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["task"] = {{"name", c.task.name},
                 {"data", c.task.data.string()},
                 {"range", c.task.range.string()},
                 {"oracle", c.task.oracle.string()},
                 {"landscape_seed", c.task.landscape_seed},
                 {"library_seed", c.task.library_seed},
                 {"library_size", c.task.library_size},
                 {"holdout", c.task.holdout}};
    j["paths"] = {{"checkpoints", c.paths.checkpoints.string()}, {"results", c.paths.results.string()}};
    j["vae"] = to_json(c.vae);
    j["flow"] = to_json(c.flow);
    j["flow_train"] = {{"learning_rate", c.flow_train.learning_rate},
                       {"epochs", c.flow_train.epochs},
                       {"batch_size", c.flow_train.batch_size}};
    j["predictor"] = {{"channels", c.predictor.model.channels},
                      {"kernel", c.predictor.model.kernel},
                      {"hidden", c.predictor.model.hidden},
                      {"learning_rate", c.predictor.model.learning_rate},
                      {"epochs", c.predictor.model.epochs},
                      {"batch_size", c.predictor.model.batch_size},
                      {"role", to_string(c.predictor.role)},
                      {"smoothing_k", c.predictor.smoothing_k},
                      {"external", c.predictor.external.string()}};
    j["sampler"] = to_json(c.sampler);
    j["eval"] = {{"seeds", c.eval.seeds},   {"alpha_grid", c.eval.alpha_grid}, {"J_grid", c.eval.J_grid},
                 {"y_grid", c.eval.y_grid}, {"K_grid", c.eval.K_grid},         {"grid_seeds", c.eval.grid_seeds}};
    j["run"] = {{"seed", c.seed}, {"parallelism", c.parallelism}};
    return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse_run_config(in);
}

inline RunConfig default_run_config() {
    std::istringstream empty;
    return parse_run_config(empty);
}

}  // namespace vlgpo
