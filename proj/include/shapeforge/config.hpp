#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "shapeforge/augment.hpp"
#include "shapeforge/core.hpp"
#include "shapeforge/neuralnet.hpp"
#include "shapeforge/synthdata.hpp"

namespace shapeforge {

// ---------------------------------------------------------------------------
// Run configuration file: plain text, one `section.key = value` per line,
// `#` starts a comment. Unknown and duplicate keys are rejected so a config
// that parses is a complete, unambiguous record of the run.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace detail

/// Raw key/value view of a config file, before typed interpretation.
struct ConfigFile {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
};

inline ConfigFile parse_config_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || key.find('.') == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": key must look like section.name");
        if (value.empty())
            throw ValidationError("config line " + std::to_string(lineno) + ": empty value for " + key);
        if (!cfg.values.emplace(key, value).second)
            throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    return cfg;
}

inline ConfigFile read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

struct ConfigReader {
    const ConfigFile& cfg;
    std::set<std::string> seen;

    std::string str(const std::string& key, const std::string& fallback) {
        seen.insert(key);
        auto it = cfg.values.find(key);
        return it == cfg.values.end() ? fallback : it->second;
    }

    double num(const std::string& key, double fallback) {
        seen.insert(key);
        auto it = cfg.values.find(key);
        if (it == cfg.values.end()) return fallback;
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(it->second, &pos);
        } catch (const std::exception&) {
            throw ValidationError("config: " + key + " is not a number: " + it->second);
        }
        if (pos != it->second.size())
            throw ValidationError("config: " + key + " is not a number: " + it->second);
        return v;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
        double v = num(key, double(fallback));
        auto u = std::uint64_t(v);
        if (double(u) != v) throw ValidationError("config: " + key + " must be a non-negative integer");
        return u;
    }

    /// Every key in the file must have been consumed by one of the getters.
    void finish() const {
        for (const auto& [key, value] : cfg.values) {
            (void)value;
            if (!seen.count(key)) throw ValidationError("config: unknown key " + key);
        }
    }
};

} // namespace detail

/// Everything a run needs, resolved from the config file plus defaults. All
/// seeds are explicit values; nothing is derived from the clock or OS
/// entropy.
struct RunConfig {
    std::string out_dir = "out";
    std::string corpus_dir;              // empty = <out_dir>/corpus, resolved by corpus()

    std::size_t n_normal = 70;
    std::size_t n_pathological = 10;
    StudyParams study;
    std::uint64_t study_seed = 1;

    double variance_target = 0.99;
    std::size_t max_modes = 0;           // 0 = uncapped

    AugmentConfig augment;               // reject_threshold 0 = auto

    std::string net = "default";
    TrainConfig train;
    double val_fraction = 0.1;

    MlpConfig mlp;
    double tost_bound = 0.1;
    double alpha = 0.05;

    std::size_t histogram_bins = 16;
    int icp_iterations = 60;

    /// Corpus location; follows out_dir unless the config names one, so a
    /// command-line output override moves the whole workspace.
    std::string corpus() const { return corpus_dir.empty() ? out_dir + "/corpus" : corpus_dir; }

    void validate() const {
        if (out_dir.empty()) throw ValidationError("config: paths.out must not be empty");
        study.validate();
        if (n_normal < study.n_held_out + study.n_unseen_normal + 2)
            throw ValidationError("config: study.n_normal leaves fewer than 2 pdm-train shapes");
        if (!(variance_target > 0.0) || variance_target > 1.0)
            throw ValidationError("config: pdm.variance_target must lie in (0, 1]");
        if (augment.n_samples < 1) throw ValidationError("config: augment.n_samples must be >= 1");
        if (net != "default") throw ValidationError("config: train.net must be 'default'");
        train.validate();
        if (!(val_fraction >= 0.0) || val_fraction >= 1.0)
            throw ValidationError("config: train.val_fraction must lie in [0, 1)");
        if (!(tost_bound > 0.0)) throw ValidationError("config: downstream.tost_bound must be > 0");
        if (!(alpha > 0.0) || alpha >= 1.0)
            throw ValidationError("config: downstream.alpha must lie in (0, 1)");
        if (histogram_bins < 1) throw ValidationError("config: eval.histogram_bins must be >= 1");
        if (icp_iterations < 1) throw ValidationError("config: eval.icp_iterations must be >= 1");
    }
};

inline RunConfig resolve_config(const ConfigFile& file) {
    detail::ConfigReader r{file, {}};
    RunConfig c;

    c.out_dir = r.str("paths.out", c.out_dir);
    c.corpus_dir = r.str("paths.corpus", "");

    c.n_normal = r.integer("study.n_normal", c.n_normal);
    c.n_pathological = r.integer("study.n_pathological", c.n_pathological);
    c.study.n_held_out = r.integer("study.n_held_out", c.study.n_held_out);
    c.study.n_unseen_normal = r.integer("study.n_unseen_normal", c.study.n_unseen_normal);
    c.study.num_points = r.integer("study.num_points", c.study.num_points);
    c.study.volume_dim = std::uint32_t(r.integer("study.volume_dim", c.study.volume_dim));
    c.study.spacing = r.num("study.spacing", c.study.spacing);
    c.study.bump_amp_lo = r.num("study.bump_amp_lo", c.study.bump_amp_lo);
    c.study.bump_amp_hi = r.num("study.bump_amp_hi", c.study.bump_amp_hi);
    c.study_seed = r.integer("study.seed", c.study_seed);

    c.variance_target = r.num("pdm.variance_target", c.variance_target);
    c.max_modes = r.integer("pdm.max_modes", c.max_modes);

    c.augment.n_samples = r.integer("augment.n_samples", 2000);
    c.augment.reject_threshold = r.num("augment.reject_threshold", 0.0);
    c.augment.tps_regularization = r.num("augment.tps_regularization", 0.0);
    c.augment.seed = r.integer("augment.seed", 2);

    c.net = r.str("train.net", c.net);
    c.train.epochs = r.integer("train.epochs", c.train.epochs);
    c.train.batch_size = r.integer("train.batch_size", c.train.batch_size);
    c.train.lr = r.num("train.lr", c.train.lr);
    c.train.seed = r.integer("train.seed", 3);
    c.val_fraction = r.num("train.val_fraction", c.val_fraction);

    c.mlp.hidden = std::uint32_t(r.integer("downstream.hidden", c.mlp.hidden));
    c.mlp.epochs = r.integer("downstream.epochs", c.mlp.epochs);
    c.mlp.batch_size = r.integer("downstream.batch_size", c.mlp.batch_size);
    c.mlp.lr = r.num("downstream.lr", c.mlp.lr);
    c.mlp.seed = r.integer("downstream.seed", 4);
    c.tost_bound = r.num("downstream.tost_bound", c.tost_bound);
    c.alpha = r.num("downstream.alpha", c.alpha);

    c.histogram_bins = r.integer("eval.histogram_bins", c.histogram_bins);
    c.icp_iterations = int(r.integer("eval.icp_iterations", std::uint64_t(c.icp_iterations)));

    r.finish();
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    return resolve_config(read_config_file(path));
}

} // namespace shapeforge
