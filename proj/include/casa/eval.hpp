#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "casa/learners.hpp"
#include "casa/math.hpp"
#include "casa/memory.hpp"
#include "casa/pca.hpp"
#include "casa/stream.hpp"

namespace casa {

// Shortest round-trip decimal form; keeps CSV output byte-stable across runs.
inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// --- per-domain evaluation ---------------------------------------------------

// row[d] = mean metric of the learner over domain d's test set (ascending d).
inline Vec evaluate_row(const Learner& learner, const std::map<int, std::vector<Record>>& tests) {
    Vec row;
    for (const auto& [domain, records] : tests) {
        if (records.empty())
            throw std::invalid_argument("evaluate_row: empty test set for domain " +
                                        std::to_string(domain));
        double acc = 0.0;
        for (const Record& r : records) acc += learner.metric(learner.predict(r.patch), r.label);
        row.push_back(acc / static_cast<double>(records.size()));
    }
    return row;
}

// --- transfer metrics ---------------------------------------------------------

// R rows: 0 = after base training, s = after stream segment s; columns are
// domains. Regression metrics are error-like, so both metrics flip sign there
// to keep "negative BWT = forgetting".
inline double bwt(const Matrix& R, TaskKind kind = TaskKind::classification) {
    const std::size_t T = R.cols;
    if (T < 2) throw std::invalid_argument("bwt: need at least 2 domains");
    if (R.rows != T + 1) throw std::invalid_argument("bwt: R must be (T+1) x T");
    if (!all_finite(R.data)) throw std::invalid_argument("bwt: non-finite entry");
    double s = 0.0;
    for (std::size_t i = 1; i + 1 <= T; ++i) s += R(T, i - 1) - R(i, i - 1);
    s /= static_cast<double>(T - 1);
    return kind == TaskKind::regression ? -s : s;
}

inline double fwt(const Matrix& R, TaskKind kind = TaskKind::classification) {
    const std::size_t T = R.cols;
    if (T < 2) throw std::invalid_argument("fwt: need at least 2 domains");
    if (R.rows != T + 1) throw std::invalid_argument("fwt: R must be (T+1) x T");
    if (!all_finite(R.data)) throw std::invalid_argument("fwt: non-finite entry");
    double s = 0.0;
    for (std::size_t i = 2; i <= T; ++i) s += R(i - 1, i - 1) - R(0, i - 1);
    s /= static_cast<double>(T - 1);
    return kind == TaskKind::regression ? -s : s;
}

// --- memory composition --------------------------------------------------------

// counts[true_domain][pseudo_domain]; both marginals sum to the memory size.
inline std::map<int, std::map<int, std::size_t>> memory_composition(
    const std::vector<MemoryEntry>& entries,
    const std::map<std::int64_t, int>& true_domain_by_id) {
    std::map<int, std::map<int, std::size_t>> table;
    for (const MemoryEntry& e : entries) {
        const auto it = true_domain_by_id.find(e.sample_id);
        if (it == true_domain_by_id.end())
            throw std::invalid_argument("memory_composition: unknown sample id " +
                                        std::to_string(e.sample_id));
        ++table[it->second][e.pseudo_domain];
    }
    return table;
}

// --- 2-D projection ------------------------------------------------------------

struct ProjectedPoint {
    double x = 0.0;
    double y = 0.0;
    int tag = 0;
};

inline std::vector<ProjectedPoint> project_2d(const std::vector<Vec>& embeddings,
                                              const std::vector<int>& tags) {
    if (embeddings.size() < 3) throw std::invalid_argument("project_2d: need at least 3 points");
    if (embeddings.size() != tags.size())
        throw std::invalid_argument("project_2d: tag count mismatch");
    const PcaModel pca = fit_pca(embeddings, 2);
    std::vector<ProjectedPoint> out;
    out.reserve(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const Vec p = pca.project(embeddings[i]);
        out.push_back(ProjectedPoint{p[0], p[1], tags[i]});
    }
    return out;
}

inline void write_projection_csv(const std::string& path,
                                 const std::vector<ProjectedPoint>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "x,y,tag\n";
    for (const ProjectedPoint& p : points)
        out << fmt_double(p.x) << "," << fmt_double(p.y) << "," << p.tag << "\n";
}

inline void write_projection_svg(const std::string& path,
                                 const std::vector<ProjectedPoint>& points) {
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
    const int W = 520, H = 520, margin = 30;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!points.empty()) {
        xmin = xmax = points[0].x;
        ymin = ymax = points[0].y;
        for (const ProjectedPoint& p : points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    const double xspan = (xmax - xmin) > 0 ? (xmax - xmin) : 1.0;
    const double yspan = (ymax - ymin) > 0 ? (ymax - ymin) : 1.0;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    std::set<int> tags;
    for (const ProjectedPoint& p : points) {
        tags.insert(p.tag);
        const double px = margin + (p.x - xmin) / xspan * (W - 2 * margin);
        const double py = H - margin - (p.y - ymin) / yspan * (H - 2 * margin);
        out << "<circle cx=\"" << fmt_double(px) << "\" cy=\"" << fmt_double(py)
            << "\" r=\"3\" fill=\"" << palette[((p.tag % 10) + 10) % 10]
            << "\" fill-opacity=\"0.7\"/>\n";
    }
    int row = 0;
    for (int t : tags) {
        out << "<circle cx=\"" << (W - 90) << "\" cy=\"" << (20 + 16 * row) << "\" r=\"4\" fill=\""
            << palette[((t % 10) + 10) % 10] << "\"/>\n"
            << "<text x=\"" << (W - 80) << "\" y=\"" << (24 + 16 * row)
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << t << "</text>\n";
        ++row;
    }
    out << "</svg>\n";
}

// --- fully supervised reference models -----------------------------------------

struct UpperBounds {
    Vec dsm_row;     // dsm_row[d]: learner trained on domain d, tested on d
    Vec jmodel_row;  // one learner trained on everything, tested per domain
};

namespace detail {

inline std::unique_ptr<Learner> fresh_learner(const Dataset& ds, double lr, std::size_t mc_passes,
                                              double p_drop, std::uint64_t seed) {
    const std::size_t dim = ds.patch_w * ds.patch_h;
    if (ds.task == TaskKind::classification)
        return std::make_unique<SgdClassifier>(dim, ds.classes, lr, seed, mc_passes, p_drop);
    return std::make_unique<SgdRegressor>(dim, lr, seed, mc_passes, p_drop);
}

}  // namespace detail

// DSM trains one learner per domain on that domain's labelled data (base set
// included for the base domain); JModel trains a single learner on the union.
inline UpperBounds train_upper_bounds(const Dataset& ds, double lr, std::size_t epochs,
                                      std::size_t batch_size, std::size_t mc_passes, double p_drop,
                                      std::uint64_t seed) {
    std::map<int, std::vector<const Record*>> by_domain;
    std::vector<const Record*> all;
    for (const Record& r : ds.base) {
        by_domain[r.domain].push_back(&r);
        all.push_back(&r);
    }
    for (const Record& r : ds.stream) {
        by_domain[r.domain].push_back(&r);
        all.push_back(&r);
    }

    const auto train_on = [&](const std::vector<const Record*>& recs, std::uint64_t learner_seed) {
        auto learner = detail::fresh_learner(ds, lr, mc_passes, p_drop, learner_seed);
        std::vector<TrainExample> examples;
        examples.reserve(recs.size());
        for (const Record* r : recs) examples.push_back(TrainExample{&r->patch, r->label});
        std::mt19937_64 rng(derive_seed(learner_seed, 0xba5e));
        base_train(*learner, examples, epochs, batch_size, rng);
        return learner;
    };

    UpperBounds ub;
    std::size_t idx = 0;
    for (const auto& [domain, recs] : by_domain) {
        auto learner = train_on(recs, derive_seed(seed, 0xdd00 + idx));
        const auto it = ds.tests.find(domain);
        if (it == ds.tests.end() || it->second.empty())
            throw std::invalid_argument("train_upper_bounds: missing test set for domain " +
                                        std::to_string(domain));
        double acc = 0.0;
        for (const Record& r : it->second) acc += learner->metric(learner->predict(r.patch), r.label);
        ub.dsm_row.push_back(acc / static_cast<double>(it->second.size()));
        ++idx;
    }
    auto joint = train_on(all, derive_seed(seed, 0xdd00));
    ub.jmodel_row = evaluate_row(*joint, ds.tests);
    return ub;
}

// --- cross-run aggregation ------------------------------------------------------

struct AggregateCell {
    double mean = 0.0;
    double stddev = 0.0;  // sample stddev; 0 when a single observation
    std::size_t count = 0;
};

inline AggregateCell aggregate(const Vec& xs) {
    AggregateCell c;
    c.count = xs.size();
    if (xs.empty()) return c;
    c.mean = mean(xs);
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - c.mean) * (x - c.mean);
        c.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return c;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(part);
    return out;
}

}  // namespace detail

struct RunSummary {
    std::string policy;
    std::uint64_t seed = 0;
    std::map<int, double> final_metrics;  // domain -> metric at the last checkpoint
    double bwt = 0.0;
    double fwt = 0.0;
};

// Reads the metrics/transfer files of one run output directory.
inline RunSummary read_run_summary(const std::string& dir) {
    RunSummary rs;
    std::ifstream metrics(dir + "/metrics.csv");
    if (!metrics) throw std::runtime_error("cannot open: " + dir + "/metrics.csv");
    std::string line;
    std::getline(metrics, line);  // header
    long long last_checkpoint = -1;
    std::map<int, double> row;
    while (std::getline(metrics, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 5) throw std::runtime_error("malformed metrics.csv row in " + dir);
        const long long cp = std::stoll(f[0]);
        if (cp > last_checkpoint) {
            last_checkpoint = cp;
            row.clear();
        }
        if (cp == last_checkpoint) row[std::stoi(f[1])] = std::stod(f[4]);
        rs.policy = f[2];
        rs.seed = std::stoull(f[3]);
    }
    rs.final_metrics = row;

    std::ifstream transfer(dir + "/transfer.csv");
    if (!transfer) throw std::runtime_error("cannot open: " + dir + "/transfer.csv");
    std::getline(transfer, line);  // header
    while (std::getline(transfer, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 4) throw std::runtime_error("malformed transfer.csv row in " + dir);
        rs.bwt = std::stod(f[2]);
        rs.fwt = std::stod(f[3]);
    }
    return rs;
}

// Collapses many run directories into per-policy mean +/- std of the final
// per-domain metrics and the transfer metrics. Returned as printable lines;
// also written as report.csv when out_path is non-empty.
inline std::string aggregate_report(const std::vector<std::string>& run_dirs,
                                    const std::string& out_path = "") {
    if (run_dirs.empty()) throw std::invalid_argument("aggregate_report: no run directories");
    std::map<std::string, std::vector<RunSummary>> by_policy;
    for (const std::string& dir : run_dirs) {
        RunSummary rs = read_run_summary(dir);
        by_policy[rs.policy].push_back(std::move(rs));
    }

    std::set<int> domains;
    for (const auto& [policy, runs] : by_policy)
        for (const RunSummary& r : runs)
            for (const auto& [d, v] : r.final_metrics) domains.insert(d);

    // table cells are for reading; the CSV keeps full round-trip precision
    const auto cell = [](const AggregateCell& c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f+/-%.4f", c.mean, c.stddev);
        return std::string(buf);
    };
    std::ostringstream table;
    std::ofstream csv;
    if (!out_path.empty()) {
        csv.open(out_path);
        if (!csv) throw std::runtime_error("cannot open for writing: " + out_path);
        csv << "policy,quantity,mean,std,runs\n";
    }
    table << "policy";
    for (int d : domains) table << "  domain_" << d;
    table << "  bwt  fwt  (mean+/-std over runs)\n";
    for (const auto& [policy, runs] : by_policy) {
        table << policy;
        for (int d : domains) {
            Vec xs;
            for (const RunSummary& r : runs) {
                const auto it = r.final_metrics.find(d);
                if (it != r.final_metrics.end()) xs.push_back(it->second);
            }
            const AggregateCell c = aggregate(xs);
            table << "  " << cell(c);
            if (csv.is_open())
                csv << policy << ",domain_" << d << "," << fmt_double(c.mean) << ","
                    << fmt_double(c.stddev) << "," << c.count << "\n";
        }
        Vec bwts, fwts;
        for (const RunSummary& r : runs) {
            bwts.push_back(r.bwt);
            fwts.push_back(r.fwt);
        }
        const AggregateCell cb = aggregate(bwts), cf = aggregate(fwts);
        table << "  " << cell(cb) << "  " << cell(cf) << "\n";
        if (csv.is_open()) {
            csv << policy << ",bwt," << fmt_double(cb.mean) << "," << fmt_double(cb.stddev) << ","
                << cb.count << "\n";
            csv << policy << ",fwt," << fmt_double(cf.mean) << "," << fmt_double(cf.stddev) << ","
                << cf.count << "\n";
        }
    }
    return table.str();
}

}  // namespace casa
