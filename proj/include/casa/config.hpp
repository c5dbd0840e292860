#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "casa/stream.hpp"

namespace casa {

enum class Policy { casa, nal, ual, none };

inline std::string to_string(Policy p) {
    switch (p) {
        case Policy::casa: return "casa";
        case Policy::nal: return "nal";
        case Policy::ual: return "ual";
        case Policy::none: return "none";
    }
    return "?";
}

inline Policy policy_from_string(const std::string& s) {
    if (s == "casa") return Policy::casa;
    if (s == "nal") return Policy::nal;
    if (s == "ual") return Policy::ual;
    if (s == "none") return Policy::none;
    throw std::invalid_argument("unknown policy: " + s);
}

// Experiment configuration. Loaded from a flat key=value file; every field
// has a working default so an empty file runs the stock benchmark.
struct PolicyConfig {
    Policy policy = Policy::casa;

    // stream consumption and training
    std::size_t B = 8;   // input mini-batch size
    std::size_t T = 8;   // training mini-batch size
    std::size_t b = 4;   // training steps per ingested batch
    double beta = 0.1;   // labelling budget as a fraction of the stream
    std::optional<std::size_t> n_override;      // NAL stride; defaults to ceil(1/beta)
    std::optional<double> u_quantile_override;  // UAL selectivity; defaults to 1-beta
    std::size_t u_window = 200;                 // rolling uncertainty window

    // pseudo-domain machinery
    double k = 0.60;        // completion threshold on the performance window mean
    std::size_t P = 5;      // performance window length
    double t = 0.0;         // discovery distance threshold; 0 = calibrate from base
    double t_scale = 6.0;   // auto-calibration factor on mean base pairwise distance
    std::size_t o = 20;     // minimum outlier count before a discovery check
    std::size_t z = 8;      // outlier age limit (in ingested batches)
    std::size_t min_group = 4;

    // embedding
    std::size_t e = 30;  // style embedding dimensionality after reduction
    std::uint64_t extractor_seed = 1234567;

    // rehearsal memory
    std::size_t M = 128;

    // task learner
    double lr = 0.05;
    std::size_t base_epochs = 20;
    std::size_t mc_passes = 10;
    double p_drop = 0.25;

    // dataset
    TaskKind task = TaskKind::classification;
    std::size_t classes = 3;
    std::size_t patch = 16;
    std::size_t domains = 4;
    std::vector<std::size_t> segment_lengths{500, 500, 500, 500};
    ScheduleMode schedule = ScheduleMode::gradual;
    std::size_t overlap = 100;
    std::size_t base_count = 500;
    std::size_t test_per_domain = 200;
    std::size_t val_per_domain = 50;
    double payload_amplitude = 0.18;
    double payload_stripe = 0.22;
    double payload_texture = 0.12;
    double payload_jitter = 0.05;
    double payload_noise = 0.10;
    double stripe_period = 4.0;
    double regression_noise = 0.02;
    double min_separation = 0.05;
    std::map<std::string, double> style_overrides;  // e.g. "style2_blur" -> 1.5

    std::size_t n() const {
        if (n_override) return *n_override;
        return static_cast<std::size_t>(std::ceil(1.0 / beta));
    }
    double u_quantile() const { return u_quantile_override.value_or(1.0 - beta); }

    void validate() const {
        if (B == 0 || T == 0 || b == 0) throw std::invalid_argument("config: B, T, b must be positive");
        if (!(beta > 0.0) || beta > 1.0) throw std::invalid_argument("config: beta must be in (0,1]");
        if (n_override) {
            const auto expected = static_cast<std::size_t>(std::ceil(1.0 / beta));
            if (*n_override != expected)
                throw std::invalid_argument("config: n must equal ceil(1/beta) = " +
                                            std::to_string(expected));
        }
        if (policy == Policy::ual && (!(u_quantile() > 0.0) || !(u_quantile() < 1.0)))
            throw std::invalid_argument("config: u_quantile must be in (0,1) for the ual policy");
        if (u_window == 0) throw std::invalid_argument("config: u_window must be positive");
        if (!(k > 0.0)) throw std::invalid_argument("config: k must be positive");
        if (P == 0 || o == 0 || z == 0 || e == 0 || M == 0 || min_group == 0)
            throw std::invalid_argument("config: P, o, z, e, M, min_group must be positive");
        if (t < 0.0) throw std::invalid_argument("config: t must be >= 0 (0 = auto)");
        if (!(t_scale > 0.0)) throw std::invalid_argument("config: t_scale must be positive");
        if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
        if (mc_passes < 2) throw std::invalid_argument("config: mc_passes must be >= 2");
        if (!(p_drop >= 0.0) || p_drop >= 1.0)
            throw std::invalid_argument("config: p_drop must be in [0,1)");
        if (domains < 2) throw std::invalid_argument("config: need at least 2 domains");
        if (segment_lengths.size() != domains)
            throw std::invalid_argument("config: segment_lengths must list one length per domain");
        if (task == TaskKind::classification && classes < 2)
            throw std::invalid_argument("config: need at least 2 classes");
        if (base_count == 0 || test_per_domain == 0 || val_per_domain == 0)
            throw std::invalid_argument("config: set sizes must be positive");
        if (base_count <= e)
            throw std::invalid_argument("config: base_count must exceed e for the reduction fit");
    }

    GeneratorSpec generator_spec() const {
        GeneratorSpec spec;
        spec.task = task;
        spec.classes = classes;
        spec.patch = patch;
        spec.domains = default_domain_specs(domains, 0);
        for (std::size_t i = 0; i < domains; ++i)
            spec.domains[i].segment_length = segment_lengths[i];
        for (const auto& [key, value] : style_overrides) {
            // key shape: style<i>_<param>
            const std::size_t us = key.find('_');
            const std::size_t idx = static_cast<std::size_t>(std::stoul(key.substr(5, us - 5)));
            const std::string param = key.substr(us + 1);
            if (idx >= domains) throw std::invalid_argument("config: style index out of range: " + key);
            StyleSpec& s = spec.domains[idx].style;
            if (param == "blur") s.blur_radius = value;
            else if (param == "noise") s.noise_sigma = value;
            else if (param == "gain") s.contrast_gain = value;
            else if (param == "offset") s.intensity_offset = value;
            else throw std::invalid_argument("config: unknown style parameter: " + key);
        }
        spec.schedule.mode = schedule;
        spec.schedule.overlap = overlap;
        spec.base_count = base_count;
        spec.test_per_domain = test_per_domain;
        spec.val_per_domain = val_per_domain;
        spec.payload_amplitude = payload_amplitude;
        spec.payload_stripe = payload_stripe;
        spec.payload_texture = payload_texture;
        spec.payload_jitter = payload_jitter;
        spec.payload_noise = payload_noise;
        spec.stripe_period = stripe_period;
        spec.regression_noise = regression_noise;
        spec.min_separation = min_separation;
        return spec;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["policy"] = to_string(policy);
        j["B"] = B;
        j["T"] = T;
        j["b"] = b;
        j["beta"] = beta;
        j["n"] = n();
        j["u_quantile"] = u_quantile();
        j["u_window"] = u_window;
        j["k"] = k;
        j["P"] = P;
        j["t"] = t;
        j["t_scale"] = t_scale;
        j["o"] = o;
        j["z"] = z;
        j["min_group"] = min_group;
        j["e"] = e;
        j["extractor_seed"] = extractor_seed;
        j["M"] = M;
        j["lr"] = lr;
        j["base_epochs"] = base_epochs;
        j["mc_passes"] = mc_passes;
        j["p_drop"] = p_drop;
        j["task"] = (task == TaskKind::classification) ? "classification" : "regression";
        j["classes"] = classes;
        j["patch"] = patch;
        j["domains"] = domains;
        j["segment_lengths"] = segment_lengths;
        j["schedule"] = to_string(schedule);
        j["overlap"] = overlap;
        j["base_count"] = base_count;
        j["test_per_domain"] = test_per_domain;
        j["val_per_domain"] = val_per_domain;
        j["payload_amplitude"] = payload_amplitude;
        j["payload_stripe"] = payload_stripe;
        j["payload_texture"] = payload_texture;
        j["payload_jitter"] = payload_jitter;
        j["payload_noise"] = payload_noise;
        j["stripe_period"] = stripe_period;
        j["regression_noise"] = regression_noise;
        j["min_separation"] = min_separation;
        for (const auto& [key, value] : style_overrides) j[key] = value;
        return j;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    const long long x = std::stoll(v);
    if (x < 0) throw std::invalid_argument("config: " + key + " must be non-negative");
    return static_cast<std::size_t>(x);
}

inline std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(to_size(key, trim(part)));
    return out;
}

}  // namespace detail

// Flat key=value text; '#' starts a comment; blank lines ignored. Unknown
// keys are errors so typos fail loudly before any work happens.
inline std::map<std::string, std::string> parse_flat_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                     ": empty key");
        if (kv.count(key))
            throw std::invalid_argument("config: duplicate key: " + key);
        kv[key] = value;
    }
    return kv;
}

inline PolicyConfig config_from_map(const std::map<std::string, std::string>& kv) {
    PolicyConfig c;
    for (const auto& [key, v] : kv) {
        if (key == "policy") c.policy = policy_from_string(v);
        else if (key == "B") c.B = detail::to_size(key, v);
        else if (key == "T") c.T = detail::to_size(key, v);
        else if (key == "b") c.b = detail::to_size(key, v);
        else if (key == "beta") c.beta = std::stod(v);
        else if (key == "n") c.n_override = detail::to_size(key, v);
        else if (key == "u_quantile") c.u_quantile_override = std::stod(v);
        else if (key == "u_window") c.u_window = detail::to_size(key, v);
        else if (key == "k") c.k = std::stod(v);
        else if (key == "P") c.P = detail::to_size(key, v);
        else if (key == "t") c.t = std::stod(v);
        else if (key == "t_scale") c.t_scale = std::stod(v);
        else if (key == "o") c.o = detail::to_size(key, v);
        else if (key == "z") c.z = detail::to_size(key, v);
        else if (key == "min_group") c.min_group = detail::to_size(key, v);
        else if (key == "e") c.e = detail::to_size(key, v);
        else if (key == "extractor_seed") c.extractor_seed = std::stoull(v);
        else if (key == "M") c.M = detail::to_size(key, v);
        else if (key == "lr") c.lr = std::stod(v);
        else if (key == "base_epochs") c.base_epochs = detail::to_size(key, v);
        else if (key == "mc_passes") c.mc_passes = detail::to_size(key, v);
        else if (key == "p_drop") c.p_drop = std::stod(v);
        else if (key == "task")
            c.task = (v == "regression") ? TaskKind::regression : TaskKind::classification;
        else if (key == "classes") c.classes = detail::to_size(key, v);
        else if (key == "patch") c.patch = detail::to_size(key, v);
        else if (key == "domains") c.domains = detail::to_size(key, v);
        else if (key == "segment_length") c.segment_lengths.assign(c.domains, detail::to_size(key, v));
        else if (key == "segment_lengths") c.segment_lengths = detail::to_size_list(key, v);
        else if (key == "schedule") c.schedule = schedule_mode_from_string(v);
        else if (key == "overlap") c.overlap = detail::to_size(key, v);
        else if (key == "base_count") c.base_count = detail::to_size(key, v);
        else if (key == "test_per_domain") c.test_per_domain = detail::to_size(key, v);
        else if (key == "val_per_domain") c.val_per_domain = detail::to_size(key, v);
        else if (key == "payload_amplitude") c.payload_amplitude = std::stod(v);
        else if (key == "payload_stripe") c.payload_stripe = std::stod(v);
        else if (key == "payload_texture") c.payload_texture = std::stod(v);
        else if (key == "payload_jitter") c.payload_jitter = std::stod(v);
        else if (key == "payload_noise") c.payload_noise = std::stod(v);
        else if (key == "stripe_period") c.stripe_period = std::stod(v);
        else if (key == "regression_noise") c.regression_noise = std::stod(v);
        else if (key == "min_separation") c.min_separation = std::stod(v);
        else if (key.rfind("style", 0) == 0 && key.find('_') != std::string::npos)
            c.style_overrides[key] = std::stod(v);
        else
            throw std::invalid_argument("config: unknown key: " + key);
    }
    // segment_length shorthand given before/after domains= must still expand correctly
    if (kv.count("segment_length") && !kv.count("segment_lengths"))
        c.segment_lengths.assign(c.domains, detail::to_size("segment_length", kv.at("segment_length")));
    c.validate();
    return c;
}

inline PolicyConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    return config_from_map(parse_flat_config(in));
}

}  // namespace casa
