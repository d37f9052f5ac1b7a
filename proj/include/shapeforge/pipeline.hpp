#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "shapeforge/augment.hpp"
#include "shapeforge/config.hpp"
#include "shapeforge/core.hpp"
#include "shapeforge/evalstats.hpp"
#include "shapeforge/mesh.hpp"
#include "shapeforge/neuralnet.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/synthdata.hpp"
#include "shapeforge/tps.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {

// ---------------------------------------------------------------------------
// Logging. Everything goes to the diagnostic stream; stdout stays clean for
// shells that capture it. Level comes from SHAPEFORGE_LOG (error|info|debug).
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("SHAPEFORGE_LOG");
    if (!v) return LogLevel::Info;
    std::string s(v);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    std::cerr << "shapeforge: unknown SHAPEFORGE_LOG value '" << s << "', using info\n";
    return LogLevel::Info;
}

struct Logger {
    LogLevel level = log_level_from_env();

    void error(const std::string& m) const { std::cerr << "error: " << m << '\n'; }
    void info(const std::string& m) const {
        if (level >= LogLevel::Info) std::cerr << m << '\n';
    }
    void debug(const std::string& m) const {
        if (level >= LogLevel::Debug) std::cerr << "debug: " << m << '\n';
    }
};

inline Logger& default_logger() {
    static Logger log;
    return log;
}

// ---------------------------------------------------------------------------
// Run manifest: one JSON line per executed stage, appended to
// <out>/run_manifest.jsonl. Each entry records the command, a hash of the
// config file, the stage seed, every corpus sample id whose data files were
// read, and a checksum for every artifact written. The quarantine and
// checksum audits below run off this ledger.
// ---------------------------------------------------------------------------

inline constexpr char kRunManifestName[] = "run_manifest.jsonl";

namespace detail {

inline std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Path as stored in the manifest: relative to the out directory when the
/// file lives under it (the normal case), absolute otherwise.
inline std::string manifest_path(const std::string& out_dir, const std::string& path) {
    namespace fs = std::filesystem;
    fs::path p = fs::weakly_canonical(path);
    fs::path rel = p.lexically_relative(fs::weakly_canonical(out_dir));
    if (rel.empty() || *rel.begin() == "..") return p.generic_string();
    return rel.generic_string();
}

inline std::string resolve_manifest_path(const std::string& out_dir, const std::string& stored) {
    namespace fs = std::filesystem;
    fs::path p(stored);
    if (p.is_absolute()) return p.string();
    return (fs::path(out_dir) / p).string();
}

} // namespace detail

struct ManifestEntry {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    int workers = 1;
    std::vector<std::pair<std::string, std::string>> inputs;     // path -> fnv1a64
    std::vector<std::string> reads;                              // corpus sample ids
    std::vector<std::pair<std::string, std::string>> artifacts;  // path -> fnv1a64
    std::vector<std::pair<std::string, std::string>> notes;

    void note(const std::string& key, const std::string& value) { notes.emplace_back(key, value); }
    void note_num(const std::string& key, double value) { notes.emplace_back(key, fmt_double(value)); }

    void add_input(const std::string& out_dir, const std::string& path) {
        inputs.emplace_back(detail::manifest_path(out_dir, path), detail::hex16(fnv1a64_file(path)));
    }
    void add_artifact(const std::string& out_dir, const std::string& path) {
        artifacts.emplace_back(detail::manifest_path(out_dir, path),
                               detail::hex16(fnv1a64_file(path)));
    }
};

inline void append_manifest_entry(const std::string& out_dir, const ManifestEntry& e) {
    namespace fs = std::filesystem;
    nlohmann::json j;
    j["command"] = e.command;
    j["config"] = e.config_hash;
    j["seed"] = e.seed;
    j["workers"] = e.workers;
    j["inputs"] = nlohmann::json::object();
    for (const auto& [path, hash] : e.inputs) j["inputs"][path] = hash;
    j["reads"] = e.reads;
    j["artifacts"] = nlohmann::json::object();
    for (const auto& [path, hash] : e.artifacts) j["artifacts"][path] = hash;
    j["notes"] = nlohmann::json::object();
    for (const auto& [key, value] : e.notes) j["notes"][key] = value;

    std::ofstream os(fs::path(out_dir) / kRunManifestName, std::ios::app);
    if (!os) throw IoError("cannot append run manifest in " + out_dir);
    os << j.dump() << '\n';
    if (!os) throw IoError("run manifest write failed in " + out_dir);
}

inline std::vector<ManifestEntry> read_run_manifest(const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::string path = (fs::path(out_dir) / kRunManifestName).string();
    std::ifstream is(path);
    if (!is) throw IoError("missing run manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("corrupt run manifest line: " + std::string(e.what()));
        }
        try {
            ManifestEntry e;
            e.command = j.at("command").get<std::string>();
            e.config_hash = j.at("config").get<std::string>();
            e.seed = j.at("seed").get<std::uint64_t>();
            e.workers = j.at("workers").get<int>();
            for (const auto& [k, v] : j.at("inputs").items())
                e.inputs.emplace_back(k, v.get<std::string>());
            for (const auto& v : j.at("reads")) e.reads.push_back(v.get<std::string>());
            for (const auto& [k, v] : j.at("artifacts").items())
                e.artifacts.emplace_back(k, v.get<std::string>());
            for (const auto& [k, v] : j.at("notes").items())
                e.notes.emplace_back(k, v.get<std::string>());
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("corrupt run manifest entry: " + std::string(e.what()));
        }
    }
    if (out.empty()) throw IoError("run manifest is empty: " + path);
    return out;
}

/// Most recent checksum per artifact path (stages may be rerun; later
/// entries supersede earlier ones).
inline std::map<std::string, std::string> latest_artifact_hashes(
    const std::vector<ManifestEntry>& entries) {
    std::map<std::string, std::string> out;
    for (const auto& e : entries)
        for (const auto& [path, hash] : e.artifacts) out[path] = hash;
    return out;
}

/// Re-hashes every artifact the manifest lists and throws on any mismatch
/// or missing file. Returns the number of artifacts verified.
inline std::size_t verify_artifact_checksums(const std::string& out_dir,
                                             const std::vector<ManifestEntry>& entries) {
    std::size_t n = 0;
    for (const auto& [stored, hash] : latest_artifact_hashes(entries)) {
        std::string path = detail::resolve_manifest_path(out_dir, stored);
        if (detail::hex16(fnv1a64_file(path)) != hash)
            throw ValidationError("artifact checksum mismatch: " + stored);
        ++n;
    }
    return n;
}

/// Unseen-sample ids whose data files were read by a model-building stage.
/// An empty result is the quarantine proof.
inline std::vector<std::string> quarantine_violations(const std::vector<ManifestEntry>& entries,
                                                      const std::set<std::string>& unseen_ids) {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (e.command != "pdm" && e.command != "augment") continue;
        for (const auto& id : e.reads)
            if (unseen_ids.count(id)) out.push_back(e.command + ":" + id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus access. The corpus manifest is the catalog; sample data files are
// loaded individually so each stage can prove which ids it touched.
// ---------------------------------------------------------------------------

struct CorpusIndex {
    std::string dir;
    std::vector<StudySample> meta; // manifest fields only, no data

    std::vector<std::string> ids(Split s) const {
        std::vector<std::string> out;
        for (const auto& m : meta)
            if (m.split == s) out.push_back(m.id);
        return out;
    }

    const StudySample& find(const std::string& id) const {
        for (const auto& m : meta)
            if (m.id == id) return m;
        throw ValidationError("corpus: unknown sample id " + id);
    }
};

inline CorpusIndex read_corpus_index(const std::string& corpus_dir) {
    namespace fs = std::filesystem;
    std::string path = (fs::path(corpus_dir) / "manifest").string();
    std::ifstream is(path);
    if (!is) throw IoError("missing corpus manifest: " + path);
    CorpusIndex idx;
    idx.dir = corpus_dir;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        idx.meta.push_back(parse_manifest_line(line));
    }
    if (idx.meta.empty()) throw IoError("corpus manifest is empty: " + path);
    return idx;
}

inline std::string corpus_shape_path(const CorpusIndex& idx, const std::string& id) {
    return (std::filesystem::path(idx.dir) / "shapes" / (id + ".csv")).string();
}
inline std::string corpus_volume_path(const CorpusIndex& idx, const std::string& id) {
    return (std::filesystem::path(idx.dir) / "volumes" / (id + ".svol")).string();
}
inline std::string corpus_mesh_path(const CorpusIndex& idx, const std::string& id) {
    return (std::filesystem::path(idx.dir) / "meshes" / (id + ".obj")).string();
}

// ---------------------------------------------------------------------------
// Stage layout under the out directory.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string out_path(const RunConfig& cfg, const std::string& rel) {
    return (std::filesystem::path(cfg.out_dir) / rel).string();
}

inline void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

/// Evaluation split labels, in fixed report order.
inline const std::vector<std::string>& eval_split_names() {
    static const std::vector<std::string> names{"train", "val", "test", "unseen_normal",
                                                "unseen_pathological"};
    return names;
}

inline std::string pred_csv_rel(const std::string& split) {
    return "predict/pred_" + split + ".csv";
}

inline void write_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                                  const std::vector<Loadings>& loadings) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write predictions: " + path);
    std::size_t m = loadings.empty() ? 0 : loadings[0].size();
    os << "id";
    for (std::size_t k = 0; k < m; ++k) os << ",m" << k;
    os << '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ids[i];
        for (double v : loadings[i]) os << ',' << fmt_double(v);
        os << '\n';
    }
    if (!os) throw IoError("predictions write failed: " + path);
}

inline std::pair<std::vector<std::string>, std::vector<Loadings>> read_predictions_csv(
    const std::string& path, std::size_t expect_dim) {
    std::ifstream is(path);
    if (!is) throw IoError("missing predictions file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty predictions file: " + path);
    std::vector<std::string> ids;
    std::vector<Loadings> loadings;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        if (!std::getline(ss, tok, ',')) throw IoError("bad predictions row in " + path);
        ids.push_back(tok);
        Loadings l;
        while (std::getline(ss, tok, ',')) {
            try {
                l.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw IoError("bad number in predictions file " + path + ": " + tok);
            }
        }
        if (l.size() != expect_dim)
            throw ValidationError("predictions file " + path + " has " + std::to_string(l.size()) +
                                  " loadings per row, expected " + std::to_string(expect_dim));
        loadings.push_back(std::move(l));
    }
    if (ids.empty()) throw IoError("predictions file has no rows: " + path);
    return {std::move(ids), std::move(loadings)};
}

inline std::string rigid_transform_ascii(const RigidTransform& t) {
    std::ostringstream os;
    for (int i = 0; i < 9; ++i) os << (i ? " " : "") << fmt_double(t.rotation.m[std::size_t(i)]);
    os << ' ' << fmt_double(t.translation.x) << ' ' << fmt_double(t.translation.y) << ' '
       << fmt_double(t.translation.z);
    return os.str();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Stages. Each stage reads its inputs from disk, writes its artifacts, and
// appends one run-manifest entry; stages can therefore be rerun
// independently and in any order that satisfies their file dependencies.
// ---------------------------------------------------------------------------

inline void stage_generate(const RunConfig& cfg, const std::string& config_hash, int workers,
                           const Logger& log = default_logger()) {
    log.info("generate: " + std::to_string(cfg.n_normal) + " normal + " +
             std::to_string(cfg.n_pathological) + " pathological samples");
    Study study = generate_study(cfg.n_normal, cfg.n_pathological, cfg.study, cfg.study_seed, workers);
    write_study(study, cfg.corpus());

    ManifestEntry e;
    e.command = "generate";
    e.config_hash = config_hash;
    e.seed = cfg.study_seed;
    e.workers = workers;
    namespace fs = std::filesystem;
    e.add_artifact(cfg.out_dir, (fs::path(cfg.corpus()) / "manifest").string());
    for (const auto& s : study.samples) {
        e.add_artifact(cfg.out_dir, (fs::path(cfg.corpus()) / "shapes" / (s.id + ".csv")).string());
        e.add_artifact(cfg.out_dir, (fs::path(cfg.corpus()) / "volumes" / (s.id + ".svol")).string());
        e.add_artifact(cfg.out_dir, (fs::path(cfg.corpus()) / "meshes" / (s.id + ".obj")).string());
    }
    e.note("n_pdm_train", std::to_string(study.indices(Split::PdmTrain).size()));
    e.note("n_held_out", std::to_string(study.indices(Split::HeldOut).size()));
    e.note("n_unseen_normal", std::to_string(study.indices(Split::UnseenNormal).size()));
    e.note("n_unseen_pathological", std::to_string(study.indices(Split::UnseenPathological).size()));
    append_manifest_entry(cfg.out_dir, e);
    log.info("generate: corpus written to " + cfg.corpus());
}

inline void stage_pdm(const RunConfig& cfg, const std::string& config_hash, int workers,
                      const Logger& log = default_logger()) {
    CorpusIndex idx = read_corpus_index(cfg.corpus());
    std::vector<std::string> ids = idx.ids(Split::PdmTrain);
    if (ids.size() < 2) throw ValidationError("pdm: corpus has fewer than 2 pdm-train shapes");

    ManifestEntry e;
    e.command = "pdm";
    e.config_hash = config_hash;
    e.seed = 0;
    e.workers = workers;
    e.add_input(cfg.out_dir, (std::filesystem::path(cfg.corpus()) / "manifest").string());

    std::vector<CorrespondenceSet> shapes;
    for (const auto& id : ids) {
        shapes.push_back(read_correspondences(corpus_shape_path(idx, id)));
        e.reads.push_back(id);
    }
    log.info("pdm: building shape space from " + std::to_string(shapes.size()) + " shapes");
    ShapeSpace ss = build_pca(shapes, cfg.variance_target,
                              cfg.max_modes == 0 ? SIZE_MAX : cfg.max_modes);

    detail::ensure_dir(detail::out_path(cfg, "pdm"));
    write_shape_space(ss, detail::out_path(cfg, "pdm/space.sspc"));

    double captured = 0;
    {
        std::ofstream os(detail::out_path(cfg, "pdm/variance.csv"));
        if (!os) throw IoError("cannot write pdm variance table");
        os << "mode,eigenvalue,cumulative_fraction\n";
        double cum = 0;
        for (std::size_t k = 0; k < ss.dim(); ++k) {
            cum += ss.eigenvalues[k];
            os << k + 1 << ',' << fmt_double(ss.eigenvalues[k]) << ','
               << fmt_double(cum / ss.total_variance) << '\n';
        }
        captured = cum / ss.total_variance;
        if (!os) throw IoError("pdm variance table write failed");
    }

    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "pdm/space.sspc"));
    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "pdm/variance.csv"));
    e.note("chosen_m", std::to_string(ss.dim()));
    e.note_num("variance_target", cfg.variance_target);
    e.note_num("variance_captured", captured);
    e.note_num("total_variance", ss.total_variance);
    append_manifest_entry(cfg.out_dir, e);
    log.info("pdm: retained " + std::to_string(ss.dim()) + " modes (" + fmt_double(captured) +
             " of variance)");
}

inline void stage_augment(const RunConfig& cfg, const std::string& config_hash, int workers,
                          const Logger& log = default_logger()) {
    CorpusIndex idx = read_corpus_index(cfg.corpus());
    std::vector<std::string> ids = idx.ids(Split::PdmTrain);
    if (ids.empty()) throw ValidationError("augment: corpus has no pdm-train shapes");

    ManifestEntry e;
    e.command = "augment";
    e.config_hash = config_hash;
    e.seed = cfg.augment.seed;
    e.workers = workers;

    ShapeSpace ss = read_shape_space(detail::out_path(cfg, "pdm/space.sspc"));
    e.add_input(cfg.out_dir, (std::filesystem::path(cfg.corpus()) / "manifest").string());
    e.add_input(cfg.out_dir, detail::out_path(cfg, "pdm/space.sspc"));

    std::vector<CorrespondenceSet> shapes;
    std::vector<Volume> volumes;
    for (const auto& id : ids) {
        shapes.push_back(read_correspondences(corpus_shape_path(idx, id)));
        // Intensities are scaled to the 0-255 range before warping so the
        // zero padding the warp samples out of bounds reads as background.
        volumes.push_back(normalize_intensity(read_svol(corpus_volume_path(idx, id))));
        e.reads.push_back(id);
    }

    AugmentConfig acfg = cfg.augment;
    bool auto_threshold = acfg.reject_threshold == 0.0;
    if (auto_threshold) acfg.reject_threshold = default_reject_threshold(shapes);

    log.info("augment: drawing " + std::to_string(acfg.n_samples) + " samples (threshold " +
             fmt_double(acfg.reject_threshold) + (auto_threshold ? ", auto)" : ")"));
    std::size_t attempts = 0;
    std::vector<AugmentedSample> samples =
        generate_augmented_set(ss, shapes, volumes, acfg, workers, &attempts);
    write_augmented_set(samples, detail::out_path(cfg, "augment"));

    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "augment/manifest"));
    for (std::size_t i = 0; i < samples.size(); ++i)
        e.add_artifact(cfg.out_dir,
                       detail::out_path(cfg, "augment/volumes/" + augmented_id(i) + ".svol"));
    e.note("n_samples", std::to_string(samples.size()));
    e.note("attempts", std::to_string(attempts));
    e.note_num("acceptance_rate", double(samples.size()) / double(attempts));
    e.note_num("reject_threshold", acfg.reject_threshold);
    e.note("threshold_mode", auto_threshold ? "auto" : "config");
    e.note("preprocess", "normalize_intensity_before_warp");
    append_manifest_entry(cfg.out_dir, e);
    log.info("augment: accepted " + std::to_string(samples.size()) + " of " +
             std::to_string(attempts) + " draws");
}

namespace detail {

/// Deterministic train/val partition of the augmented set: indices are
/// shuffled on a stream derived from the training seed (ids 0 and 1 are
/// used inside training itself), the first block becomes validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_partition(
    std::size_t n, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng master(seed);
    Rng stream = master.derive(2);
    stream.shuffle(order);
    auto n_val = std::size_t(val_fraction * double(n));
    std::vector<std::size_t> val(order.begin(), order.begin() + std::ptrdiff_t(n_val));
    std::vector<std::size_t> train(order.begin() + std::ptrdiff_t(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return {std::move(train), std::move(val)};
}

} // namespace detail

inline void stage_train(const RunConfig& cfg, const std::string& config_hash, int workers,
                        const Logger& log = default_logger()) {
    ManifestEntry e;
    e.command = "train";
    e.config_hash = config_hash;
    e.seed = cfg.train.seed;
    e.workers = workers;

    // Read before registering inputs so a missing prerequisite fails with a
    // message naming it rather than a hashing error.
    std::vector<AugmentedSample> aug = read_augmented_set(detail::out_path(cfg, "augment"));
    ShapeSpace ss = read_shape_space(detail::out_path(cfg, "pdm/space.sspc"));
    e.add_input(cfg.out_dir, detail::out_path(cfg, "augment/manifest"));
    e.add_input(cfg.out_dir, detail::out_path(cfg, "pdm/space.sspc"));
    for (const auto& a : aug)
        if (a.loadings.size() != ss.dim())
            throw ValidationError("train: augmented loadings do not match the shape space");

    const auto& dims = aug[0].image.dims;
    if (dims[0] != dims[1] || dims[0] != dims[2])
        throw ValidationError("train: augmented volumes must be cubic");
    for (const auto& a : aug)
        if (a.image.dims != dims)
            throw ValidationError("train: augmented volumes have mixed dimensions");

    auto [train_idx, val_idx] =
        detail::train_val_partition(aug.size(), cfg.val_fraction, cfg.train.seed);
    if (train_idx.empty()) throw ValidationError("train: no training samples after the split");

    std::vector<Volume> train_vols, val_vols;
    std::vector<Loadings> train_targets, val_targets;
    for (std::size_t i : train_idx) {
        train_vols.push_back(std::move(aug[i].image));
        train_targets.push_back(aug[i].loadings);
    }
    for (std::size_t i : val_idx) {
        val_vols.push_back(std::move(aug[i].image));
        val_targets.push_back(aug[i].loadings);
    }

    NetSpec spec = default_net_spec(dims[0], std::uint32_t(ss.dim()));
    TrainConfig tcfg = cfg.train;
    tcfg.workers = workers;
    log.info("train: " + std::to_string(train_vols.size()) + " train / " +
             std::to_string(val_vols.size()) + " val samples, " + std::to_string(tcfg.epochs) +
             " epochs");
    TrainResult result = train(spec, train_vols, train_targets, val_vols, val_targets, tcfg);

    detail::ensure_dir(detail::out_path(cfg, "train"));
    write_net(spec, result.params, detail::out_path(cfg, "train/net.snet"));
    write_rmse_history(result.history, detail::out_path(cfg, "train/rmse_history.csv"));
    {
        std::ofstream os(detail::out_path(cfg, "train/split.csv"));
        if (!os) throw IoError("cannot write train split table");
        os << "id,role\n";
        std::vector<const char*> role(aug.size(), "train");
        for (std::size_t i : val_idx) role[i] = "val";
        for (std::size_t i = 0; i < aug.size(); ++i) os << augmented_id(i) << ',' << role[i] << '\n';
        if (!os) throw IoError("train split table write failed");
    }

    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "train/net.snet"));
    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "train/rmse_history.csv"));
    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "train/split.csv"));
    e.note("n_train", std::to_string(train_vols.size()));
    e.note("n_val", std::to_string(val_vols.size()));
    e.note_num("final_train_rmse", result.history.back().train_rmse);
    e.note_num("final_val_rmse", result.history.back().val_rmse);
    append_manifest_entry(cfg.out_dir, e);
    log.info("train: final train rmse " + fmt_double(result.history.back().train_rmse));
}

inline void stage_predict(const RunConfig& cfg, const std::string& config_hash, int workers,
                          const Logger& log = default_logger()) {
    (void)workers;
    ManifestEntry e;
    e.command = "predict";
    e.config_hash = config_hash;
    e.seed = 0;
    e.workers = workers;

    auto [spec, params] = read_net(detail::out_path(cfg, "train/net.snet"));
    e.add_input(cfg.out_dir, detail::out_path(cfg, "train/net.snet"));
    e.add_input(cfg.out_dir, detail::out_path(cfg, "train/split.csv"));
    e.add_input(cfg.out_dir, detail::out_path(cfg, "augment/manifest"));
    detail::ensure_dir(detail::out_path(cfg, "predict"));

    // Augmented train/val samples, exactly as the network saw them.
    {
        std::vector<AugmentedSample> aug = read_augmented_set(detail::out_path(cfg, "augment"));
        std::ifstream split_is(detail::out_path(cfg, "train/split.csv"));
        if (!split_is) throw IoError("missing train split table");
        std::string line;
        std::getline(split_is, line);
        std::map<std::string, std::string> roles;
        while (std::getline(split_is, line)) {
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos) throw IoError("bad train split row: " + line);
            roles[line.substr(0, comma)] = line.substr(comma + 1);
        }
        std::vector<std::string> ids_train, ids_val;
        std::vector<Loadings> pred_train, pred_val;
        for (std::size_t i = 0; i < aug.size(); ++i) {
            std::string id = augmented_id(i);
            auto it = roles.find(id);
            if (it == roles.end()) throw ValidationError("train split table is missing " + id);
            Loadings p = predict_loadings(spec, params, aug[i].image);
            if (it->second == "val") {
                ids_val.push_back(id);
                pred_val.push_back(std::move(p));
            } else {
                ids_train.push_back(id);
                pred_train.push_back(std::move(p));
            }
        }
        detail::write_predictions_csv(detail::out_path(cfg, detail::pred_csv_rel("train")),
                                      ids_train, pred_train);
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, detail::pred_csv_rel("train")));
        e.note("n_train", std::to_string(ids_train.size()));
        if (!ids_val.empty()) {
            detail::write_predictions_csv(detail::out_path(cfg, detail::pred_csv_rel("val")),
                                          ids_val, pred_val);
            e.add_artifact(cfg.out_dir, detail::out_path(cfg, detail::pred_csv_rel("val")));
        }
        e.note("n_val", std::to_string(ids_val.size()));
        log.info("predict: augmented set done (" + std::to_string(aug.size()) + " volumes)");
    }

    // Corpus splits the network never trained on.
    CorpusIndex idx = read_corpus_index(cfg.corpus());
    e.add_input(cfg.out_dir, (std::filesystem::path(cfg.corpus()) / "manifest").string());
    const std::pair<Split, std::string> corpus_splits[] = {
        {Split::HeldOut, "test"},
        {Split::UnseenNormal, "unseen_normal"},
        {Split::UnseenPathological, "unseen_pathological"},
    };
    for (const auto& [split, name] : corpus_splits) {
        std::vector<std::string> ids = idx.ids(split);
        e.note("n_" + name, std::to_string(ids.size()));
        if (ids.empty()) continue;
        std::vector<Loadings> preds;
        for (const auto& id : ids) {
            Volume v = normalize_intensity(read_svol(corpus_volume_path(idx, id)));
            e.reads.push_back(id);
            preds.push_back(predict_loadings(spec, params, v));
        }
        detail::write_predictions_csv(detail::out_path(cfg, detail::pred_csv_rel(name)), ids, preds);
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, detail::pred_csv_rel(name)));
        log.info("predict: " + name + " done (" + std::to_string(ids.size()) + " volumes)");
    }
    e.note("preprocess", "normalize_intensity");
    append_manifest_entry(cfg.out_dir, e);
}

inline void stage_evaluate(const RunConfig& cfg, const std::string& config_hash, int workers,
                           const Logger& log = default_logger()) {
    namespace fs = std::filesystem;
    ManifestEntry e;
    e.command = "evaluate";
    e.config_hash = config_hash;
    e.seed = cfg.mlp.seed;
    e.workers = workers;

    ShapeSpace ss = read_shape_space(detail::out_path(cfg, "pdm/space.sspc"));
    CorpusIndex idx = read_corpus_index(cfg.corpus());
    e.add_input(cfg.out_dir, detail::out_path(cfg, "pdm/space.sspc"));
    e.add_input(cfg.out_dir, (fs::path(cfg.corpus()) / "manifest").string());
    detail::ensure_dir(detail::out_path(cfg, "evaluate"));

    // Predicted loadings per evaluation split, in fixed report order.
    std::vector<std::pair<std::string, std::vector<Loadings>>> split_loadings;
    std::map<std::string, std::vector<std::string>> split_ids;
    for (const auto& name : detail::eval_split_names()) {
        std::string path = detail::out_path(cfg, detail::pred_csv_rel(name));
        if (!fs::exists(path)) continue;
        e.add_input(cfg.out_dir, path);
        auto [ids, loadings] = detail::read_predictions_csv(path, ss.dim());
        split_ids[name] = std::move(ids);
        split_loadings.emplace_back(name, std::move(loadings));
    }
    if (split_loadings.empty()) throw IoError("evaluate: no prediction files under predict/");
    auto loadings_of = [&](const std::string& name) -> const std::vector<Loadings>* {
        for (const auto& [n, l] : split_loadings)
            if (n == name) return &l;
        return nullptr;
    };

    // Ground truth for the augmented splits is the drawn loadings.
    std::map<std::string, Loadings> aug_truth;
    if (loadings_of("train") || loadings_of("val")) {
        e.add_input(cfg.out_dir, detail::out_path(cfg, "augment/manifest"));
        std::vector<AugmentedSample> aug =
            read_augmented_set(detail::out_path(cfg, "augment"), /*load_volumes=*/false);
        for (std::size_t i = 0; i < aug.size(); ++i) aug_truth[augmented_id(i)] = aug[i].loadings;
    }

    // Correspondence error per split, vertex fields for the unseen splits.
    std::vector<std::string> omitted;
    std::map<std::string, std::vector<std::vector<double>>> corr_errors;
    for (const auto& [name, loadings] : split_loadings) {
        const auto& ids = split_ids[name];
        std::vector<std::vector<double>> per_shape;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            CorrespondenceSet rec = reconstruct(ss, loadings[i]);
            CorrespondenceSet truth;
            if (name == "train" || name == "val") {
                auto it = aug_truth.find(ids[i]);
                if (it == aug_truth.end())
                    throw ValidationError("evaluate: augmented manifest is missing " + ids[i]);
                truth = reconstruct(ss, it->second);
            } else {
                truth = read_correspondences(corpus_shape_path(idx, ids[i]));
                e.reads.push_back(ids[i]);
            }
            per_shape.push_back(correspondence_error(rec, truth));
        }
        ErrorReport report = make_error_report(name, per_shape);
        std::string rel = "evaluate/errors_" + name + ".csv";
        write_error_report_csv(report, detail::out_path(cfg, rel));
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, rel));
        e.note_num("mean_corr_" + name, report.pooled.mean);
        corr_errors[name] = std::move(per_shape);
        log.info("evaluate: " + name + " mean correspondence error " +
                 fmt_double(report.pooled.mean));
    }
    for (const auto& name : detail::eval_split_names())
        if (!loadings_of(name)) omitted.push_back(name);

    // Surface projection error for the corpus splits (needs meshes).
    for (const std::string name : {"test", "unseen_normal", "unseen_pathological"}) {
        const auto* loadings = loadings_of(name);
        if (!loadings) continue;
        const auto& ids = split_ids[name];
        std::vector<std::vector<double>> per_shape;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            TriMesh mesh = read_obj(corpus_mesh_path(idx, ids[i]));
            CorrespondenceSet rec = reconstruct(ss, (*loadings)[i]);
            RigidTransform tf;
            per_shape.push_back(
                unseen_projection_error(rec, mesh, cfg.icp_iterations, workers, &tf));
            e.note("icp." + name + "." + ids[i], detail::rigid_transform_ascii(tf));
        }
        ErrorReport report = make_error_report(name, per_shape);
        std::string rel = "evaluate/projection_" + name + ".csv";
        write_error_report_csv(report, detail::out_path(cfg, rel));
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, rel));
        e.note_num("mean_proj_" + name, report.pooled.mean);
    }

    // Mahalanobis histograms over predicted loadings, one shared binning.
    {
        HistogramTable table = mahalanobis_histogram(ss, split_loadings, cfg.histogram_bins);
        write_histogram_csv(table, detail::out_path(cfg, "evaluate/mahalanobis.csv"));
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, "evaluate/mahalanobis.csv"));
        for (const auto& h : table.splits) e.note_num("mahalanobis_mean_" + h.split, h.mean);
    }

    // Mean per-point error fields for the unseen splits, with the mean shape
    // as a point-cloud sidecar for visualization.
    bool wrote_field = false;
    for (const std::string name : {"unseen_normal", "unseen_pathological"}) {
        auto it = corr_errors.find(name);
        if (it == corr_errors.end()) continue;
        std::vector<double> field = vertex_error_field(it->second, FieldStat::Mean);
        std::string rel = "evaluate/field_" + name + ".csv";
        write_vertex_field_csv(field, detail::out_path(cfg, rel));
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, rel));
        wrote_field = true;
    }
    if (wrote_field) {
        TriMesh mean_cloud;
        mean_cloud.vertices = unflatten(ss.mean).points;
        write_obj(mean_cloud, detail::out_path(cfg, "evaluate/mean_shape.obj"));
        e.add_artifact(cfg.out_dir, detail::out_path(cfg, "evaluate/mean_shape.obj"));
    }

    // Downstream task: the synthetic clinical variable is the largest
    // semi-axis scaled to [0, 1] over its configured population range. The
    // helper model is trained on true projections and queried with both
    // loading sources.
    {
        std::vector<std::string> ids;
        std::vector<Loadings> net_loads;
        for (const std::string name : {"test", "unseen_normal"}) {
            const auto* loadings = loadings_of(name);
            if (!loadings) continue;
            for (std::size_t i = 0; i < loadings->size(); ++i) {
                ids.push_back(split_ids[name][i]);
                net_loads.push_back((*loadings)[i]);
            }
        }
        if (ids.size() >= 2) {
            std::vector<Loadings> pdm_loads;
            std::vector<double> targets;
            double span = cfg.study.axis_hi - cfg.study.axis_lo;
            for (const auto& id : ids) {
                pdm_loads.push_back(project(ss, read_correspondences(corpus_shape_path(idx, id))));
                const StudySample& meta = idx.find(id);
                targets.push_back(
                    std::clamp((meta.shape.semi_a - cfg.study.axis_lo) / span, 0.0, 1.0));
            }
            DownstreamReport ds = downstream_equivalence(ss, pdm_loads, net_loads, targets,
                                                         cfg.mlp, cfg.tost_bound, cfg.alpha);
            {
                std::ofstream os(detail::out_path(cfg, "evaluate/downstream.csv"));
                if (!os) throw IoError("cannot write downstream report");
                os << "metric,value\n";
                os << "n," << ids.size() << '\n';
                os << "exactly_equal," << (ds.exactly_equal ? 1 : 0) << '\n';
                os << "mean_abs_diff," << fmt_double(ds.mean_abs_diff) << '\n';
                os << "t," << fmt_double(ds.ttest.t) << '\n';
                os << "df," << fmt_double(ds.ttest.df) << '\n';
                os << "p," << fmt_double(ds.ttest.p) << '\n';
                os << "tost_p_lower," << fmt_double(ds.tost.p_lower) << '\n';
                os << "tost_p_upper," << fmt_double(ds.tost.p_upper) << '\n';
                os << "tost_bound," << fmt_double(cfg.tost_bound) << '\n';
                os << "alpha," << fmt_double(cfg.alpha) << '\n';
                os << "equivalent," << (ds.tost.equivalent ? 1 : 0) << '\n';
                if (!os) throw IoError("downstream report write failed");
            }
            e.add_artifact(cfg.out_dir, detail::out_path(cfg, "evaluate/downstream.csv"));
        } else {
            e.note("downstream", "skipped: fewer than 2 evaluation samples");
        }
    }

    if (!omitted.empty()) {
        std::string joined;
        for (const auto& name : omitted) joined += (joined.empty() ? "" : ",") + name;
        e.note("omitted_splits", joined);
    }
    append_manifest_entry(cfg.out_dir, e);
}

// ---------------------------------------------------------------------------
// Report: verifies the ledger, then renders one markdown summary.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("missing report input: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(tok);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline const ManifestEntry* latest_entry(const std::vector<ManifestEntry>& entries,
                                         const std::string& command) {
    const ManifestEntry* found = nullptr;
    for (const auto& e : entries)
        if (e.command == command) found = &e;
    return found;
}

inline std::string entry_note(const ManifestEntry& e, const std::string& key,
                              const std::string& fallback = "") {
    for (const auto& [k, v] : e.notes)
        if (k == key) return v;
    return fallback;
}

} // namespace detail

inline void stage_report(const RunConfig& cfg, const std::string& config_hash, int workers,
                         const Logger& log = default_logger()) {
    namespace fs = std::filesystem;
    std::vector<ManifestEntry> entries = read_run_manifest(cfg.out_dir);

    std::size_t verified = verify_artifact_checksums(cfg.out_dir, entries);
    log.info("report: " + std::to_string(verified) + " artifact checksums verified");

    CorpusIndex idx = read_corpus_index(cfg.corpus());
    std::set<std::string> unseen_ids;
    for (const auto& id : idx.ids(Split::UnseenNormal)) unseen_ids.insert(id);
    for (const auto& id : idx.ids(Split::UnseenPathological)) unseen_ids.insert(id);
    std::vector<std::string> violations = quarantine_violations(entries, unseen_ids);
    if (!violations.empty()) {
        std::string joined;
        for (const auto& v : violations) joined += (joined.empty() ? "" : ", ") + v;
        throw ValidationError("quarantine violated: unseen samples were read while building the "
                              "model: " + joined);
    }

    const ManifestEntry* pdm = detail::latest_entry(entries, "pdm");
    const ManifestEntry* aug = detail::latest_entry(entries, "augment");
    const ManifestEntry* train = detail::latest_entry(entries, "train");
    const ManifestEntry* eval = detail::latest_entry(entries, "evaluate");
    if (!pdm || !aug || !train || !eval)
        throw ValidationError("report: the run manifest lacks a completed pipeline "
                              "(need pdm, augment, train, and evaluate entries)");

    std::vector<std::string> notices;
    std::ostringstream md;
    md << "# Shape model pipeline report\n\n";

    // Shape space.
    md << "## Shape space\n\n";
    md << "- retained modes: " << detail::entry_note(*pdm, "chosen_m") << "\n";
    md << "- variance target: " << detail::entry_note(*pdm, "variance_target")
       << ", captured: " << detail::entry_note(*pdm, "variance_captured") << "\n";
    md << "- total variance: " << detail::entry_note(*pdm, "total_variance") << " mm^2\n\n";
    md << "| mode | eigenvalue (mm^2) | cumulative fraction |\n|---|---|---|\n";
    for (const auto& row : detail::read_csv_rows(detail::out_path(cfg, "pdm/variance.csv"))) {
        if (row.size() != 3 || row[0] == "mode") continue;
        md << "| " << row[0] << " | " << row[1] << " | " << row[2] << " |\n";
    }
    md << "\n";

    // Augmentation.
    md << "## Augmentation\n\n";
    md << "- accepted samples: " << detail::entry_note(*aug, "n_samples") << " of "
       << detail::entry_note(*aug, "attempts") << " draws (acceptance rate "
       << detail::entry_note(*aug, "acceptance_rate") << ")\n";
    md << "- reject threshold: " << detail::entry_note(*aug, "reject_threshold") << " mm ("
       << detail::entry_note(*aug, "threshold_mode") << ")\n\n";

    // Training.
    md << "## Training\n\n";
    md << "- samples: " << detail::entry_note(*train, "n_train") << " train, "
       << detail::entry_note(*train, "n_val") << " validation\n";
    md << "- final RMSE: train " << detail::entry_note(*train, "final_train_rmse") << ", val "
       << detail::entry_note(*train, "final_val_rmse") << "\n\n";
    md << "| epoch | train RMSE | val RMSE |\n|---|---|---|\n";
    for (const auto& row :
         detail::read_csv_rows(detail::out_path(cfg, "train/rmse_history.csv"))) {
        if (row.size() != 3 || row[0] == "epoch") continue;
        md << "| " << row[0] << " | " << row[1] << " | " << row[2] << " |\n";
    }
    md << "\n";

    // Error tables: pooled row per split.
    auto pooled_row_table = [&](const std::string& stem, const std::string& heading,
                                const std::vector<std::string>& names) {
        md << "## " << heading << "\n\n";
        md << "| split | min | q1 | median | q3 | max | mean | std |\n";
        md << "|---|---|---|---|---|---|---|---|\n";
        for (const auto& name : names) {
            std::string path = detail::out_path(cfg, "evaluate/" + stem + "_" + name + ".csv");
            if (!fs::exists(path)) {
                notices.push_back(heading + ": split '" + name + "' absent, section row omitted");
                continue;
            }
            for (const auto& row : detail::read_csv_rows(path)) {
                if (row.size() != 9 || row[1] != "pooled") continue;
                md << "| " << row[0] << " | " << row[2] << " | " << row[3] << " | " << row[4]
                   << " | " << row[5] << " | " << row[6] << " | " << row[7] << " | " << row[8]
                   << " |\n";
            }
        }
        md << "\n";
    };
    pooled_row_table("errors", "Correspondence error (mm)", detail::eval_split_names());
    pooled_row_table("projection", "Surface projection error (mm)",
                     {"test", "unseen_normal", "unseen_pathological"});

    // Mahalanobis.
    md << "## Mahalanobis distances\n\n";
    md << "| split | mean | std |\n|---|---|---|\n";
    std::map<std::string, double> maha_mean;
    {
        std::set<std::string> seen;
        for (const auto& row :
             detail::read_csv_rows(detail::out_path(cfg, "evaluate/mahalanobis.csv"))) {
            if (row.size() != 6 || row[0] == "split") continue;
            if (!seen.insert(row[0]).second) continue;
            md << "| " << row[0] << " | " << row[4] << " | " << row[5] << " |\n";
            maha_mean[row[0]] = std::stod(row[4]);
        }
    }
    if (maha_mean.count("unseen_normal") && maha_mean.count("unseen_pathological"))
        md << "\n- separation (unseen_pathological mean - unseen_normal mean): "
           << fmt_double(maha_mean["unseen_pathological"] - maha_mean["unseen_normal"]) << "\n";
    else
        notices.push_back("Mahalanobis separation: unseen splits absent, figure omitted");
    md << "- full histograms: evaluate/mahalanobis.csv\n\n";

    // Vertex error fields.
    md << "## Vertex error fields\n\n";
    ShapeSpace ss = read_shape_space(detail::out_path(cfg, "pdm/space.sspc"));
    bool any_field = false;
    for (const std::string name : {"unseen_normal", "unseen_pathological"}) {
        std::string path = detail::out_path(cfg, "evaluate/field_" + name + ".csv");
        if (!fs::exists(path)) {
            notices.push_back("Vertex error field: split '" + name + "' absent, section omitted");
            continue;
        }
        any_field = true;
        std::vector<double> field;
        for (const auto& row : detail::read_csv_rows(path)) {
            if (row.size() != 2 || row[0] == "point_index") continue;
            field.push_back(std::stod(row[1]));
        }
        std::vector<double> sorted = field;
        std::sort(sorted.begin(), sorted.end());
        double median = quantile_sorted(sorted, 0.5);
        std::size_t argmax =
            std::size_t(std::max_element(field.begin(), field.end()) - field.begin());
        md << "- " << name << ": peak at point " << argmax << ", max/median ratio "
           << fmt_double(field[argmax] / median);
        if (name == "unseen_pathological") {
            Vec3 dir = fibonacci_direction(argmax, field.size());
            double angle = std::acos(std::clamp(dot(dir, cfg.study.bump_center_direction), -1.0, 1.0));
            md << ", peak direction " << fmt_double(angle)
               << " rad from the bump center (2x bump width = "
               << fmt_double(2.0 * cfg.study.bump_width) << " rad)";
        }
        md << "\n";
    }
    if (any_field) md << "- mean shape point cloud: evaluate/mean_shape.obj\n";
    md << "\n";

    // Downstream equivalence.
    md << "## Downstream task equivalence\n\n";
    {
        std::string path = detail::out_path(cfg, "evaluate/downstream.csv");
        if (fs::exists(path)) {
            std::map<std::string, std::string> kv;
            for (const auto& row : detail::read_csv_rows(path))
                if (row.size() == 2) kv[row[0]] = row[1];
            md << "- samples: " << kv["n"] << "\n";
            md << "- mean |prediction difference|: " << kv["mean_abs_diff"] << "\n";
            if (kv["exactly_equal"] == "1") {
                md << "- predictions from both loading sources are exactly equal\n";
            } else {
                md << "- paired t-test: t = " << kv["t"] << ", df = " << kv["df"]
                   << ", p = " << kv["p"] << "\n";
                md << "- TOST (bound " << kv["tost_bound"] << ", alpha " << kv["alpha"]
                   << "): p_lower = " << kv["tost_p_lower"] << ", p_upper = " << kv["tost_p_upper"]
                   << "\n";
            }
            md << "- equivalent within the bound: " << (kv["equivalent"] == "1" ? "yes" : "no")
               << "\n\n";
        } else {
            md << "- skipped: " << detail::entry_note(*eval, "downstream", "not computed") << "\n\n";
            notices.push_back("Downstream equivalence: no report produced");
        }
    }

    // Integrity.
    md << "## Integrity\n\n";
    md << "- artifact checksums verified: " << verified << "\n";
    md << "- quarantine: no unseen sample id was read during pdm or augment\n";
    (void)ss;
    if (!notices.empty()) {
        md << "\n## Notices\n\n";
        for (const auto& n : notices) md << "- " << n << "\n";
    }

    detail::ensure_dir(detail::out_path(cfg, "report"));
    {
        std::ofstream os(detail::out_path(cfg, "report/report.md"));
        if (!os) throw IoError("cannot write report");
        os << md.str();
        if (!os) throw IoError("report write failed");
    }

    ManifestEntry e;
    e.command = "report";
    e.config_hash = config_hash;
    e.seed = 0;
    e.workers = workers;
    e.add_artifact(cfg.out_dir, detail::out_path(cfg, "report/report.md"));
    e.note("checksums_verified", std::to_string(verified));
    e.note("quarantine", "clean");
    for (const auto& n : notices) e.note("notice", n);
    append_manifest_entry(cfg.out_dir, e);
    log.info("report: written to " + detail::out_path(cfg, "report/report.md"));
}

// ---------------------------------------------------------------------------
// Self test: quick in-memory consistency probes of the numerical core. No
// files, no configuration, fully deterministic.
// ---------------------------------------------------------------------------

inline std::size_t run_selftest(const Logger& log = default_logger()) {
    std::size_t checks = 0;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) throw ValidationError("selftest failed: " + what);
        ++checks;
        log.debug("selftest ok: " + what);
    };

    {
        Rng a(97), b(97);
        bool same = true;
        for (int i = 0; i < 100; ++i) same = same && a.raw() == b.raw();
        expect(same, "seeded random stream is reproducible");
    }
    {
        std::vector<CorrespondenceSet> shapes(4);
        Rng rng(5);
        for (auto& s : shapes) {
            s.points.resize(6);
            for (auto& p : s.points)
                p = {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};
        }
        ShapeSpace ss = build_pca(shapes, 1.0);
        CorrespondenceSet rec = reconstruct(ss, project(ss, shapes[0]));
        double worst = 0;
        for (std::size_t i = 0; i < rec.points.size(); ++i)
            worst = std::max(worst, norm(rec.points[i] - shapes[0].points[i]));
        expect(worst < 1e-8, "full-rank PCA reconstructs a training shape");
        expect(mahalanobis(ss, Loadings(ss.dim(), 0.0)) == 0.0, "mean shape scores zero");
    }
    {
        CorrespondenceSet sites;
        Rng rng(11);
        sites.points.resize(8);
        for (auto& p : sites.points)
            p = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        TpsWarp warp = fit_tps(sites, sites, 0.0);
        double worst = 0;
        for (const auto& p : sites.points) worst = std::max(worst, norm(warp.apply(p) - p));
        expect(worst < 1e-9, "identity warp interpolates its sites");
    }
    {
        NetSpec spec;
        spec.input_channels = 1;
        spec.input_dims = {3, 3, 3};
        spec.output_dim = 2;
        spec.layers = {conv3d(1, 2, 3), flatten(), fully_connected(54, 2)};
        NetParams params = xavier_init(spec, 21);
        Tensor4 t = Tensor4::zeros(1, 3, 3, 3);
        Rng rng(22);
        for (auto& v : t.data) v = rng.normal();
        std::vector<Tensor4> batch{t};
        auto p1 = forward(spec, params, batch, NetMode::Infer);
        auto p2 = forward(spec, params, batch, NetMode::Infer);
        expect(p1 == p2 && std::isfinite(p1[0][0]), "network forward pass is deterministic");
    }
    {
        double p = paired_ttest({2, -1, 3, 4, 0, 2, 1, 3, -2, 4},
                                std::vector<double>(10, 0.0))
                       .p;
        expect(std::abs(p - 0.0367875) < 1e-4, "paired t-test matches its reference value");
    }
    log.info("selftest: " + std::to_string(checks) + " checks passed");
    return checks;
}

} // namespace shapeforge
