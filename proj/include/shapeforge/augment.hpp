#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "shapeforge/core.hpp"
#include "shapeforge/rng.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/tps.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {

struct AugmentConfig {
    std::size_t n_samples = 0;
    double reject_threshold = 0.0; // tau, mm in flat correspondence space
    std::uint64_t seed = 0;
    double tps_regularization = 0.0;

    void validate() const {
        if (n_samples < 1) throw ValidationError("augment: n_samples must be >= 1");
        if (!(reject_threshold > 0.0)) throw ValidationError("augment: reject threshold must be > 0");
        if (tps_regularization < 0.0) throw ValidationError("augment: tps regularization must be >= 0");
    }
};

/// One draw from the shape distribution: coeff_i = sqrt(lambda_i) * g_i.
inline Loadings sample_loadings(const ShapeSpace& ss, Rng& rng) {
    if (ss.dim() < 1) throw ValidationError("sample_loadings: shape space has no modes");
    Loadings l(ss.dim());
    for (std::size_t k = 0; k < ss.dim(); ++k) l[k] = std::sqrt(ss.eigenvalues[k]) * rng.normal();
    return l;
}

/// Euclidean distance between two correspondence sets in flat 3P space.
inline double correspondence_distance(const CorrespondenceSet& a, const CorrespondenceSet& b) {
    if (a.size() != b.size()) throw ValidationError("correspondence_distance: point counts differ");
    double s = 0;
    for (std::size_t i = 0; i < a.points.size(); ++i) s += norm2(a.points[i] - b.points[i]);
    return std::sqrt(s);
}

/// Index of the training shape closest (flat Euclidean metric) to the shape
/// reconstructed from loadings s; ties keep the lowest index.
inline std::size_t nearest_example(const ShapeSpace& ss, const std::vector<CorrespondenceSet>& training,
                                   const Loadings& s, double* distance_out = nullptr) {
    if (training.empty()) throw ValidationError("nearest_example: no training shapes");
    CorrespondenceSet rec = reconstruct(ss, s);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < training.size(); ++i) {
        double d = correspondence_distance(rec, training[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (distance_out) *distance_out = best_d;
    return best;
}

/// Default add-reject threshold: 1.5 x the mean nearest-neighbor distance
/// among the training shapes themselves.
inline double default_reject_threshold(const std::vector<CorrespondenceSet>& training) {
    if (training.size() < 2)
        throw ValidationError("default_reject_threshold: need at least 2 training shapes");
    double sum = 0;
    for (std::size_t i = 0; i < training.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < training.size(); ++j) {
            if (j == i) continue;
            best = std::min(best, correspondence_distance(training[i], training[j]));
        }
        sum += best;
    }
    return 1.5 * sum / double(training.size());
}

struct AugmentedSample {
    Volume image;
    Loadings loadings;          // the drawn coefficients s
    std::size_t source_index;   // nearest training example n
    double distance;            // ||reconstruct(s) - training[n]||, <= tau
};

/// Draws shapes from N(0, diag(lambda)) in loading space until n_samples
/// pass the add-reject test (distance to the nearest training shape <= tau;
/// rejected draws are replaced), then warps each nearest example's image so
/// its anatomy follows the sampled shape. The draw sequence comes from one
/// seeded stream, so output is bitwise reproducible; warping runs on the
/// worker pool in draw order.
inline std::vector<AugmentedSample> generate_augmented_set(
    const ShapeSpace& ss, const std::vector<CorrespondenceSet>& training,
    const std::vector<Volume>& images, const AugmentConfig& cfg, int workers = 1,
    std::size_t* attempts_out = nullptr) {
    cfg.validate();
    if (training.empty()) throw ValidationError("augment: no training shapes");
    if (training.size() != images.size())
        throw ValidationError("augment: shape/image lists are not index-aligned");

    Rng rng(cfg.seed);
    std::vector<AugmentedSample> out;
    out.reserve(cfg.n_samples);
    const std::size_t budget = 10 * cfg.n_samples;
    std::size_t attempts = 0;
    while (out.size() < cfg.n_samples) {
        if (attempts >= budget && out.size() * 100 < attempts) {
            throw ValidationError(
                "augment: acceptance rate below 1% after " + std::to_string(attempts) +
                " attempts (" + std::to_string(out.size()) +
                " accepted); the reject threshold is misconfigured");
        }
        ++attempts;
        Loadings s = sample_loadings(ss, rng);
        double dist = 0;
        std::size_t n = nearest_example(ss, training, s, &dist);
        if (dist > cfg.reject_threshold) continue;
        AugmentedSample a;
        a.loadings = std::move(s);
        a.source_index = n;
        a.distance = dist;
        out.push_back(std::move(a));
    }
    if (attempts_out) *attempts_out = attempts;

    // Backward warp: fit sites on the sampled shape (C_s) onto the source
    // example (C_n), so sampling the source at warp(x) deforms its anatomy
    // into the sampled shape.
    parallel_for(out.size(), workers, [&](std::size_t i) {
        AugmentedSample& a = out[i];
        CorrespondenceSet cs = reconstruct(ss, a.loadings);
        TpsWarp warp = fit_tps(cs, training[a.source_index], cfg.tps_regularization);
        const Volume& src = images[a.source_index];
        a.image = warp_volume(warp, src, src, 1);
    });
    return out;
}


// ---------------------------------------------------------------------------
// Augmented dataset on disk: volumes/<id>.svol plus a `manifest` text file
// with one line per sample carrying the volume path, the drawn loadings,
// the nearest source example, and its acceptance distance.
// ---------------------------------------------------------------------------

inline std::string augmented_id(std::size_t index) {
    std::ostringstream os;
    os << 'a' << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

inline void write_augmented_set(const std::vector<AugmentedSample>& samples,
                                const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "volumes");
    std::ofstream manifest(fs::path(dir) / "manifest");
    if (!manifest) throw IoError("cannot write augmented manifest in " + dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const AugmentedSample& a = samples[i];
        std::string id = augmented_id(i);
        std::string rel = "volumes/" + id + ".svol";
        write_svol(a.image, (fs::path(dir) / rel).string());
        manifest << "aug id=" << id << " svol=" << rel << " source=" << a.source_index
                 << " distance=" << fmt_double(a.distance) << " loadings=";
        for (std::size_t k = 0; k < a.loadings.size(); ++k)
            manifest << (k ? "," : "") << fmt_double(a.loadings[k]);
        manifest << '\n';
    }
    if (!manifest) throw IoError("augmented manifest write failed in " + dir);
}

/// Loads a dataset written by write_augmented_set, in manifest order. Pass
/// load_volumes = false when only loadings and provenance are needed.
inline std::vector<AugmentedSample> read_augmented_set(const std::string& dir,
                                                       bool load_volumes = true) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest");
    if (!manifest) throw IoError("missing augmented manifest in " + dir);
    std::vector<AugmentedSample> out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "aug") throw IoError("augmented manifest: line does not start with 'aug'");
        AugmentedSample a;
        std::string svol;
        bool got_id = false, got_svol = false, got_source = false, got_distance = false,
             got_loadings = false;
        std::string field;
        while (ss >> field) {
            auto eq = field.find('=');
            if (eq == std::string::npos)
                throw IoError("augmented manifest: field without '=': " + field);
            std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            try {
                if (key == "id") {
                    got_id = true;
                } else if (key == "svol") {
                    svol = value;
                    got_svol = true;
                } else if (key == "source") {
                    a.source_index = std::stoull(value);
                    got_source = true;
                } else if (key == "distance") {
                    a.distance = std::stod(value);
                    got_distance = true;
                } else if (key == "loadings") {
                    std::istringstream ls(value);
                    std::string tok;
                    while (std::getline(ls, tok, ',')) a.loadings.push_back(std::stod(tok));
                    got_loadings = !a.loadings.empty();
                } else {
                    throw IoError("augmented manifest: unknown field: " + key);
                }
            } catch (const std::invalid_argument&) {
                throw IoError("augmented manifest: bad number in " + key);
            } catch (const std::out_of_range&) {
                throw IoError("augmented manifest: bad number in " + key);
            }
        }
        if (!(got_id && got_svol && got_source && got_distance && got_loadings))
            throw IoError("augmented manifest: missing fields in line: " + line);
        if (load_volumes) a.image = read_svol((fs::path(dir) / svol).string());
        out.push_back(std::move(a));
    }
    if (out.empty()) throw IoError("augmented manifest is empty in " + dir);
    return out;
}

} // namespace shapeforge
