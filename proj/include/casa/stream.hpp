#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "casa/domains.hpp"
#include "casa/math.hpp"

namespace casa {

// Rendering transform standing in for an acquisition setting. Applied to the
// payload texture in fixed order: blur, contrast gain, offset, noise, clamp.
struct StyleSpec {
    double blur_radius = 0.0;
    double noise_sigma = 0.0;
    double contrast_gain = 1.0;
    double intensity_offset = 0.0;
};

struct DomainSpec {
    int domain_id = 0;
    StyleSpec style;
    std::size_t segment_length = 0;
};

enum class ScheduleMode { ordered, gradual, random };

inline std::string to_string(ScheduleMode m) {
    switch (m) {
        case ScheduleMode::ordered: return "ordered";
        case ScheduleMode::gradual: return "gradual";
        case ScheduleMode::random: return "random";
    }
    return "?";
}

inline ScheduleMode schedule_mode_from_string(const std::string& s) {
    if (s == "ordered") return ScheduleMode::ordered;
    if (s == "gradual") return ScheduleMode::gradual;
    if (s == "random") return ScheduleMode::random;
    throw std::invalid_argument("unknown schedule mode: " + s);
}

struct StreamSchedule {
    ScheduleMode mode = ScheduleMode::gradual;
    std::size_t overlap = 100;  // transition band width, gradual mode only
};

// One stream element with its hidden ground truth. Policies only ever see
// the id and the feature vector (see orchestrator::StreamItem).
struct Record {
    std::int64_t id = 0;
    Vec patch;  // row-major, values in [0,1]; doubles as the feature vector
    double label = 0.0;
    int domain = 0;
};

struct GeneratorSpec {
    TaskKind task = TaskKind::classification;
    std::size_t classes = 3;
    std::size_t patch = 16;  // square patches
    std::vector<DomainSpec> domains;
    StreamSchedule schedule;
    std::size_t base_count = 500;
    std::size_t test_per_domain = 200;
    std::size_t val_per_domain = 50;
    double payload_amplitude = 0.35;   // coarse cue: class blob, survives any blur
    double payload_stripe = 0.0;       // fine cue: class stripes, inverted by wide blur
    double payload_jitter = 0.05;
    double payload_noise = 0.05;
    double payload_texture = 0.2;  // fixed fine checkerboard, shared by all classes
    double stripe_period = 4.0;
    Vec regression_coef{0.6, -0.4, 0.5, 0.3};
    double regression_noise = 0.02;
    double min_separation = 0.05;
};

// Four visually distinct acquisition styles; repeats with growing offsets
// beyond four domains.
inline std::vector<DomainSpec> default_domain_specs(std::size_t count,
                                                    std::size_t segment_length) {
    static const StyleSpec presets[4] = {
        {0.0, 0.02, 1.00, 0.00},
        {1.0, 0.05, 0.70, 0.15},
        {2.0, 0.03, 1.40, -0.12},
        {3.0, 0.04, 1.20, 0.12},
    };
    std::vector<DomainSpec> out;
    for (std::size_t i = 0; i < count; ++i) {
        StyleSpec s = presets[i % 4];
        s.blur_radius += static_cast<double>(i / 4);
        s.intensity_offset += 0.05 * static_cast<double>(i / 4);
        out.push_back(DomainSpec{static_cast<int>(i), s, segment_length});
    }
    return out;
}

struct Dataset {
    std::size_t patch_w = 16;
    std::size_t patch_h = 16;
    TaskKind task = TaskKind::classification;
    std::size_t classes = 3;
    std::size_t domain_count = 0;
    std::vector<std::size_t> segment_lengths;
    std::vector<Record> base;
    std::vector<Record> stream;
    std::map<int, std::vector<Record>> tests;
    std::map<int, std::vector<Record>> vals;

    // nominal ground-truth segment boundaries (cumulative stream positions)
    std::vector<std::size_t> boundaries() const {
        std::vector<std::size_t> b;
        std::size_t acc = 0;
        for (std::size_t len : segment_lengths) {
            acc += len;
            b.push_back(acc);
        }
        return b;
    }
};

namespace detail {

inline Vec box_blur(const Vec& img, std::size_t w, std::size_t h, int r) {
    if (r <= 0) return img;
    Vec out(img.size());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = -r; dy <= r; ++dy) {
                long yy = std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(h) - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    long xx = std::clamp<long>(static_cast<long>(x) + dx, 0,
                                               static_cast<long>(w) - 1);
                    s += img[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
                    ++n;
                }
            }
            out[y * w + x] = s / n;
        }
    }
    return out;
}

}  // namespace detail

// blur -> contrast gain -> offset -> additive noise -> clamp to [0,1]
inline Vec render_patch(const Vec& payload, std::size_t w, std::size_t h, const StyleSpec& style,
                        std::mt19937_64& rng) {
    Vec img = detail::box_blur(payload, w, h, static_cast<int>(std::lround(style.blur_radius)));
    if (style.contrast_gain != 1.0)
        for (double& v : img) v = 0.5 + style.contrast_gain * (v - 0.5);
    if (style.intensity_offset != 0.0)
        for (double& v : img) v += style.intensity_offset;
    if (style.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, style.noise_sigma);
        for (double& v : img) v += noise(rng);
    }
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    return img;
}

namespace detail {

// Class prototype: a smooth bright blob at a class-specific position on a
// ring around the patch center, plus amplitude jitter and pixel noise. The
// low spatial frequency keeps classes linearly identifiable under every
// rendering style; the label never depends on the style.
inline Vec class_payload(const GeneratorSpec& spec, std::size_t cls, std::mt19937_64& rng) {
    const std::size_t n = spec.patch;
    std::uniform_real_distribution<double> jitter_d(-spec.payload_jitter, spec.payload_jitter);
    std::normal_distribution<double> noise_d(0.0, spec.payload_noise);
    const double amp = spec.payload_amplitude * (1.0 + jitter_d(rng));
    const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(cls) /
                         static_cast<double>(spec.classes);
    const double mid = (static_cast<double>(n) - 1.0) / 2.0;
    const double ring = 0.3 * static_cast<double>(n);
    const double cx = mid + ring * std::cos(angle);
    const double cy = mid + ring * std::sin(angle);
    const double width = static_cast<double>(n) / 5.0;
    const double denom = 2.0 * width * width;
    // Fine cue: a sinusoidal grating whose phase encodes the class. At the
    // default period a wide box blur inverts its sign, so a model leaning on
    // this cue is actively misled on heavily blurred domains until retrained.
    const double freq = 2.0 * 3.14159265358979323846 / spec.stripe_period;
    const double phase = 2.0 * 3.14159265358979323846 * static_cast<double>(cls) /
                         static_cast<double>(spec.classes);
    Vec img(n * n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double checker = ((x + y) % 2 == 0) ? 1.0 : -1.0;
            img[y * n + x] = 0.5 + amp * std::exp(-(dx * dx + dy * dy) / denom) +
                             spec.payload_stripe *
                                 std::sin(freq * static_cast<double>(x) + phase) +
                             spec.payload_texture * checker +
                             (spec.payload_noise > 0 ? noise_d(rng) : 0.0);
        }
    return img;
}

// Latent-weighted sum of fixed oriented textures; the label is linear in the
// latent, independent of the rendering style.
inline Vec regression_payload(const GeneratorSpec& spec, Vec& latent_out, std::mt19937_64& rng) {
    const std::size_t n = spec.patch;
    const std::size_t k = spec.regression_coef.size();
    std::uniform_real_distribution<double> u_d(-1.0, 1.0);
    Vec u(k);
    for (double& v : u) v = u_d(rng);
    const double freq = 2.0 * 3.14159265358979323846 / spec.stripe_period;
    Vec img(n * n, 0.5);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
            img[y * n + x] += spec.payload_texture * (((x + y) % 2 == 0) ? 1.0 : -1.0);
    for (std::size_t j = 0; j < k; ++j) {
        const double theta = 3.14159265358979323846 * static_cast<double>(j) /
                             static_cast<double>(k);
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double t = std::cos(theta) * static_cast<double>(x) +
                                 std::sin(theta) * static_cast<double>(y);
                img[y * n + x] += 0.12 * u[j] * std::sin(freq * t);
            }
    }
    latent_out = std::move(u);
    return img;
}

inline Record make_record(const GeneratorSpec& spec, int domain, std::int64_t id,
                          std::mt19937_64& rng) {
    Record rec;
    rec.id = id;
    rec.domain = domain;
    Vec payload;
    if (spec.task == TaskKind::classification) {
        std::uniform_int_distribution<std::size_t> cls_d(0, spec.classes - 1);
        const std::size_t cls = cls_d(rng);
        payload = class_payload(spec, cls, rng);
        rec.label = static_cast<double>(cls);
    } else {
        Vec latent;
        payload = regression_payload(spec, latent, rng);
        double y = 0.0;
        for (std::size_t j = 0; j < latent.size(); ++j) y += spec.regression_coef[j] * latent[j];
        if (spec.regression_noise > 0.0) {
            std::normal_distribution<double> n_d(0.0, spec.regression_noise);
            y += n_d(rng);
        }
        rec.label = y;
    }
    rec.patch = render_patch(payload, spec.patch, spec.patch,
                             spec.domains[static_cast<std::size_t>(domain)].style, rng);
    return rec;
}

inline void validate_spec(const GeneratorSpec& spec) {
    if (spec.domains.size() < 2) throw std::invalid_argument("generate: need at least 2 domains");
    if (spec.patch < 4) throw std::invalid_argument("generate: patch too small");
    if (spec.task == TaskKind::classification && spec.classes < 2)
        throw std::invalid_argument("generate: need at least 2 classes");
    if (spec.schedule.mode == ScheduleMode::gradual) {
        for (std::size_t i = 0; i + 1 < spec.domains.size(); ++i) {
            if (spec.schedule.overlap > spec.domains[i].segment_length ||
                spec.schedule.overlap > spec.domains[i + 1].segment_length)
                throw std::invalid_argument("generate: overlap wider than a segment");
        }
    }
    for (std::size_t i = 0; i < spec.domains.size(); ++i) {
        for (std::size_t j = i + 1; j < spec.domains.size(); ++j) {
            const StyleSpec& a = spec.domains[i].style;
            const StyleSpec& b = spec.domains[j].style;
            const double sep = std::max({std::abs(a.blur_radius - b.blur_radius),
                                         std::abs(a.noise_sigma - b.noise_sigma),
                                         std::abs(a.contrast_gain - b.contrast_gain),
                                         std::abs(a.intensity_offset - b.intensity_offset)});
            if (sep < spec.min_separation)
                throw std::invalid_argument(
                    "generate: domains " + std::to_string(i) + " and " + std::to_string(j) +
                    " are closer than the minimum style separation");
        }
    }
}

inline std::vector<int> domain_sequence(const GeneratorSpec& spec, std::mt19937_64& rng) {
    std::vector<int> seq;
    for (const DomainSpec& d : spec.domains)
        seq.insert(seq.end(), d.segment_length, d.domain_id);

    if (spec.schedule.mode == ScheduleMode::random) {
        std::shuffle(seq.begin(), seq.end(), rng);
        return seq;
    }
    if (spec.schedule.mode == ScheduleMode::gradual && spec.schedule.overlap > 1) {
        const std::size_t w = spec.schedule.overlap;
        std::size_t boundary = 0;
        for (std::size_t s = 0; s + 1 < spec.domains.size(); ++s) {
            boundary += spec.domains[s].segment_length;
            const std::size_t lo = boundary - w / 2;
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (std::size_t p = lo; p < lo + w && p < seq.size(); ++p) {
                const double ramp =
                    (static_cast<double>(p - lo) + 0.5) / static_cast<double>(w);
                seq[p] = (u(rng) < ramp) ? spec.domains[s + 1].domain_id
                                         : spec.domains[s].domain_id;
            }
        }
    }
    return seq;
}

}  // namespace detail

// Produces the base set (domain 0 only), the continual stream under the
// schedule, and per-domain validation/test sets, all with globally unique ids.
inline Dataset generate(const GeneratorSpec& spec, std::uint64_t seed) {
    detail::validate_spec(spec);
    std::mt19937_64 rng(derive_seed(seed, 0xda7a5e7));

    Dataset ds;
    ds.patch_w = ds.patch_h = spec.patch;
    ds.task = spec.task;
    ds.classes = spec.classes;
    ds.domain_count = spec.domains.size();
    for (const DomainSpec& d : spec.domains) ds.segment_lengths.push_back(d.segment_length);

    std::int64_t next_id = 0;
    for (std::size_t i = 0; i < spec.base_count; ++i)
        ds.base.push_back(detail::make_record(spec, spec.domains.front().domain_id, next_id++, rng));

    const std::vector<int> seq = detail::domain_sequence(spec, rng);
    ds.stream.reserve(seq.size());
    for (int d : seq) ds.stream.push_back(detail::make_record(spec, d, next_id++, rng));

    for (const DomainSpec& d : spec.domains) {
        auto& val = ds.vals[d.domain_id];
        for (std::size_t i = 0; i < spec.val_per_domain; ++i)
            val.push_back(detail::make_record(spec, d.domain_id, next_id++, rng));
        auto& test = ds.tests[d.domain_id];
        for (std::size_t i = 0; i < spec.test_per_domain; ++i)
            test.push_back(detail::make_record(spec, d.domain_id, next_id++, rng));
    }
    return ds;
}

// --- newline-delimited JSON persistence -------------------------------------

inline void write_ndjson(const std::string& path, const std::vector<Record>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const Record& r : records) {
        nlohmann::json j;
        j["id"] = r.id;
        j["patch"] = r.patch;
        j["label"] = r.label;
        j["domain"] = r.domain;
        out << j.dump() << "\n";
    }
}

inline std::vector<Record> read_ndjson(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<Record> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        Record r;
        r.id = j.at("id").get<std::int64_t>();
        r.patch = j.at("patch").get<Vec>();
        r.label = j.at("label").get<double>();
        r.domain = j.at("domain").get<int>();
        out.push_back(std::move(r));
    }
    return out;
}

inline void export_dataset(const Dataset& ds, const std::string& dir) {
    write_ndjson(dir + "/base.ndjson", ds.base);
    write_ndjson(dir + "/stream.ndjson", ds.stream);
    for (const auto& [d, recs] : ds.tests)
        write_ndjson(dir + "/test_" + std::to_string(d) + ".ndjson", recs);
    for (const auto& [d, recs] : ds.vals)
        write_ndjson(dir + "/val_" + std::to_string(d) + ".ndjson", recs);
    nlohmann::json meta;
    meta["patch_w"] = ds.patch_w;
    meta["patch_h"] = ds.patch_h;
    meta["task"] = (ds.task == TaskKind::classification) ? "classification" : "regression";
    meta["classes"] = ds.classes;
    meta["domain_count"] = ds.domain_count;
    meta["segment_lengths"] = ds.segment_lengths;
    std::ofstream out(dir + "/dataset_meta.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/dataset_meta.json");
    out << meta.dump(2) << "\n";
}

inline Dataset import_dataset(const std::string& dir) {
    std::ifstream meta_in(dir + "/dataset_meta.json");
    if (!meta_in) throw std::runtime_error("cannot open: " + dir + "/dataset_meta.json");
    nlohmann::json meta;
    meta_in >> meta;

    Dataset ds;
    ds.patch_w = meta.at("patch_w").get<std::size_t>();
    ds.patch_h = meta.at("patch_h").get<std::size_t>();
    ds.task = meta.at("task").get<std::string>() == "classification" ? TaskKind::classification
                                                                     : TaskKind::regression;
    ds.classes = meta.at("classes").get<std::size_t>();
    ds.domain_count = meta.at("domain_count").get<std::size_t>();
    ds.segment_lengths = meta.at("segment_lengths").get<std::vector<std::size_t>>();
    ds.base = read_ndjson(dir + "/base.ndjson");
    ds.stream = read_ndjson(dir + "/stream.ndjson");
    for (std::size_t d = 0; d < ds.domain_count; ++d) {
        ds.tests[static_cast<int>(d)] = read_ndjson(dir + "/test_" + std::to_string(d) + ".ndjson");
        ds.vals[static_cast<int>(d)] = read_ndjson(dir + "/val_" + std::to_string(d) + ".ndjson");
    }
    return ds;
}

}  // namespace casa
