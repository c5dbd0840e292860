#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

#include "casa/eval.hpp"

using namespace casa;

namespace {

// fixed-behaviour learner for exercising the harness without training
class StubLearner final : public Learner {
public:
    StubLearner(std::size_t classes, std::optional<std::size_t> fixed_class)
        : classes_(classes), fixed_(fixed_class) {}

    TaskKind kind() const override { return TaskKind::classification; }
    void train_step(const std::vector<TrainExample>&) override {}
    Vec predict(const Vec& x) const override {
        Vec p(classes_, 0.0);
        const auto cls = fixed_ ? *fixed_ : static_cast<std::size_t>(std::lround(x.at(0)));
        p.at(cls) = 1.0;
        return p;
    }
    double metric(const Vec& prediction, double label) const override {
        const auto arg = std::max_element(prediction.begin(), prediction.end());
        return static_cast<double>(arg - prediction.begin()) == label ? 1.0 : 0.0;
    }
    double batch_loss(const std::vector<TrainExample>&) const override { return 0.0; }
    double uncertainty(const Vec&, std::mt19937_64&) const override { return 0.0; }
    Vec snapshot() const override { return {}; }
    void restore(const Vec&) override {}
    std::unique_ptr<Learner> clone() const override { return std::make_unique<StubLearner>(*this); }

private:
    std::size_t classes_;
    std::optional<std::size_t> fixed_;
};

std::map<int, std::vector<Record>> balanced_tests(std::size_t domains, std::size_t per_class,
                                                  std::size_t classes) {
    std::map<int, std::vector<Record>> tests;
    std::int64_t id = 0;
    for (std::size_t d = 0; d < domains; ++d) {
        for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t k = 0; k < per_class; ++k) {
                Record r;
                r.id = id++;
                r.domain = static_cast<int>(d);
                r.label = static_cast<double>(c);
                r.patch = Vec{static_cast<double>(c), 0.0};
                tests[static_cast<int>(d)].push_back(std::move(r));
            }
        }
    }
    return tests;
}

// same transfer definitions, rebuilt from scratch against 1-based task indices
double reference_bwt(const Matrix& R) {
    const std::size_t T = R.cols;
    Vec diffs;
    for (std::size_t task = 1; task <= T - 1; ++task)
        diffs.push_back(R(T, task - 1) - R(task, task - 1));
    return mean(diffs);
}

double reference_fwt(const Matrix& R) {
    const std::size_t T = R.cols;
    Vec diffs;
    for (std::size_t task = 2; task <= T; ++task)
        diffs.push_back(R(task - 1, task - 1) - R(0, task - 1));
    return mean(diffs);
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("casa_eval_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("a perfect predictor scores one on every domain") {
    const auto tests = balanced_tests(3, 4, 3);
    const StubLearner perfect(3, std::nullopt);
    const Vec row = evaluate_row(perfect, tests);
    REQUIRE(row == Vec{1.0, 1.0, 1.0});
}

TEST_CASE("a constant predictor scores the class share") {
    const auto tests = balanced_tests(2, 5, 3);
    const StubLearner constant(3, 0);
    const Vec row = evaluate_row(constant, tests);
    REQUIRE(row.size() == 2);
    for (double v : row) REQUIRE(v == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("evaluation equals the hand-computed mean") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::map<int, std::vector<Record>> tests;
    for (int i = 0; i < 30; ++i) {
        Record r;
        r.id = i;
        r.domain = i % 2;
        r.label = static_cast<double>(i % 2);
        r.patch = Vec{u(rng), u(rng)};
        tests[r.domain].push_back(std::move(r));
    }
    SgdClassifier clf(2, 2, 0.1, 7);
    const Vec row = evaluate_row(clf, tests);
    std::size_t col = 0;
    for (const auto& [d, recs] : tests) {
        double acc = 0.0;
        for (const auto& r : recs) acc += clf.metric(clf.predict(r.patch), r.label);
        REQUIRE(row[col] == acc / static_cast<double>(recs.size()));
        ++col;
    }

    std::map<int, std::vector<Record>> holed = tests;
    holed[5] = {};
    REQUIRE_THROWS_AS(evaluate_row(clf, holed), std::invalid_argument);
}

TEST_CASE("transfer metrics vanish on a constant matrix") {
    Matrix R(5, 4, 0.6);
    REQUIRE(bwt(R) == 0.0);
    REQUIRE(fwt(R) == 0.0);
}

TEST_CASE("backward transfer on a two-domain run") {
    // domain 1 scored 0.8 right after its segment, 0.7 at the end
    Matrix R(3, 2, 0.0);
    R(0, 0) = 0.75;
    R(0, 1) = 0.40;
    R(1, 0) = 0.80;
    R(1, 1) = 0.45;
    R(2, 0) = 0.70;
    R(2, 1) = 0.85;
    REQUIRE(bwt(R) == Catch::Approx(-0.1).epsilon(1e-12));
    REQUIRE(fwt(R) == Catch::Approx(0.45 - 0.40).epsilon(1e-12));
}

TEST_CASE("transfer metrics match an independent rebuild") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t T = 2 + rng() % 5;
        Matrix R(T + 1, T, 0.0);
        for (double& v : R.data) v = u(rng);
        REQUIRE(bwt(R) == Catch::Approx(reference_bwt(R)).margin(1e-12));
        REQUIRE(fwt(R) == Catch::Approx(reference_fwt(R)).margin(1e-12));
        REQUIRE(bwt(R, TaskKind::regression) == Catch::Approx(-bwt(R)).margin(1e-15));
        REQUIRE(fwt(R, TaskKind::regression) == Catch::Approx(-fwt(R)).margin(1e-15));
    }
}

TEST_CASE("transfer metrics reject malformed matrices") {
    REQUIRE_THROWS_AS(bwt(Matrix(2, 1, 0.5)), std::invalid_argument);
    REQUIRE_THROWS_AS(fwt(Matrix(2, 1, 0.5)), std::invalid_argument);
    REQUIRE_THROWS_AS(bwt(Matrix(3, 3, 0.5)), std::invalid_argument);
    Matrix bad(3, 2, 0.5);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(bwt(bad), std::invalid_argument);
}

TEST_CASE("memory composition counts true against assigned domains") {
    std::vector<MemoryEntry> entries(3);
    entries[0].sample_id = 1;
    entries[0].pseudo_domain = 0;
    entries[1].sample_id = 2;
    entries[1].pseudo_domain = 0;
    entries[2].sample_id = 3;
    entries[2].pseudo_domain = 2;
    const std::map<std::int64_t, int> truth{{1, 0}, {2, 0}, {3, 1}};
    const auto table = memory_composition(entries, truth);
    REQUIRE(table.at(0).at(0) == 2);
    REQUIRE(table.at(1).at(2) == 1);
    std::size_t total = 0;
    for (const auto& [td, row] : table)
        for (const auto& [pd, n] : row) total += n;
    REQUIRE(total == entries.size());

    std::vector<MemoryEntry> unknown(1);
    unknown[0].sample_id = 99;
    REQUIRE_THROWS_AS(memory_composition(unknown, truth), std::invalid_argument);
}

TEST_CASE("collinear points project onto one axis") {
    std::vector<Vec> points;
    std::vector<int> tags;
    const Vec origin{1.0, 2.0, 3.0, 4.0};
    const Vec dir{1.0, -1.0, 0.5, 2.0};
    for (int i = 0; i < 10; ++i) {
        Vec p(4);
        for (std::size_t k = 0; k < 4; ++k) p[k] = origin[k] + 0.25 * i * dir[k];
        points.push_back(std::move(p));
        tags.push_back(i % 3);
    }
    const auto proj = project_2d(points, tags);
    REQUIRE(proj.size() == points.size());
    for (const auto& p : proj) REQUIRE(std::abs(p.y) <= 1e-8);
    for (std::size_t i = 0; i < proj.size(); ++i) REQUIRE(proj[i].tag == tags[i]);

    const std::vector<Vec> two = {{1.0, 2.0}, {3.0, 4.0}};
    const std::vector<int> two_tags = {0, 1};
    REQUIRE_THROWS_AS(project_2d(two, two_tags), std::invalid_argument);
    REQUIRE_THROWS_AS(project_2d(points, two_tags), std::invalid_argument);
}

TEST_CASE("projection files are written in the documented shapes") {
    std::vector<Vec> points;
    std::vector<int> tags;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 12; ++i) {
        points.push_back(Vec{u(rng), u(rng), u(rng)});
        tags.push_back(i % 4);
    }
    const auto proj = project_2d(points, tags);
    const auto dir = temp_dir("proj");
    const std::string csv_path = (dir / "projection.csv").string();
    const std::string svg_path = (dir / "projection.svg").string();
    write_projection_csv(csv_path, proj);
    write_projection_svg(svg_path, proj);

    std::ifstream csv(csv_path);
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "x,y,tag");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == proj.size());

    std::ifstream svg(svg_path);
    std::stringstream ss;
    ss << svg.rdbuf();
    const std::string body = ss.str();
    REQUIRE(body.find("<svg") == 0);
    REQUIRE(body.find("<circle") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("per-domain and joint references coincide on a single domain") {
    Dataset ds;
    ds.patch_w = ds.patch_h = 4;
    ds.task = TaskKind::classification;
    ds.classes = 2;
    ds.domain_count = 1;
    ds.segment_lengths = {20};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::int64_t id = 0;
    const auto make = [&](double label) {
        Record r;
        r.id = id++;
        r.domain = 0;
        r.label = label;
        r.patch.assign(16, 0.5);
        for (double& v : r.patch) v += noise(rng);
        r.patch[0] += label;  // separable signal
        return r;
    };
    for (int i = 0; i < 30; ++i) ds.base.push_back(make(static_cast<double>(i % 2)));
    for (int i = 0; i < 20; ++i) ds.stream.push_back(make(static_cast<double>(i % 2)));
    for (int i = 0; i < 10; ++i) ds.tests[0].push_back(make(static_cast<double>(i % 2)));

    const UpperBounds ub = train_upper_bounds(ds, 0.1, 10, 4, 5, 0.1, 77);
    REQUIRE(ub.dsm_row.size() == 1);
    REQUIRE(ub.jmodel_row.size() == 1);
    REQUIRE(ub.dsm_row[0] == ub.jmodel_row[0]);  // same data, same seed, bit for bit
}

TEST_CASE("per-domain references master a separable benchmark") {
    GeneratorSpec spec;
    spec.domains = default_domain_specs(2, 150);
    spec.base_count = 150;
    spec.test_per_domain = 60;
    spec.val_per_domain = 0;
    const auto ds = generate(spec, 21);
    const UpperBounds ub = train_upper_bounds(ds, 0.05, 30, 8, 5, 0.25, 21);
    for (double v : ub.dsm_row) REQUIRE(v >= 0.9);
}

TEST_CASE("sample statistics aggregate correctly") {
    const AggregateCell c = aggregate({1.0, 2.0, 3.0});
    REQUIRE(c.mean == Catch::Approx(2.0));
    REQUIRE(c.stddev == Catch::Approx(1.0));
    REQUIRE(c.count == 3);
    const AggregateCell single = aggregate({5.0});
    REQUIRE(single.mean == 5.0);
    REQUIRE(single.stddev == 0.0);
    REQUIRE(aggregate({}).count == 0);
}

TEST_CASE("reports combine runs into per-policy statistics") {
    const auto dir = temp_dir("report");
    const auto write_run = [&](const std::string& name, const std::string& policy, int seed,
                               double d0, double d1, double bwt_v, double fwt_v) {
        const auto run = dir / name;
        std::filesystem::create_directories(run);
        std::ofstream metrics(run / "metrics.csv");
        metrics << "checkpoint,domain,policy,seed,metric_value\n";
        metrics << "0,0," << policy << "," << seed << ",0.5\n";
        metrics << "0,1," << policy << "," << seed << ",0.4\n";
        metrics << "2,0," << policy << "," << seed << "," << d0 << "\n";
        metrics << "2,1," << policy << "," << seed << "," << d1 << "\n";
        std::ofstream transfer(run / "transfer.csv");
        transfer << "policy,seed,bwt,fwt\n";
        transfer << policy << "," << seed << "," << bwt_v << "," << fwt_v << "\n";
        return (run).string();
    };
    const std::vector<std::string> runs = {
        write_run("a", "casa", 1, 0.8, 0.6, -0.02, 0.1),
        write_run("b", "casa", 2, 0.9, 0.7, -0.04, 0.2),
        write_run("c", "none", 1, 0.5, 0.3, -0.30, 0.0),
    };

    const RunSummary rs = read_run_summary(runs[0]);
    REQUIRE(rs.policy == "casa");
    REQUIRE(rs.seed == 1);
    REQUIRE(rs.final_metrics.at(0) == 0.8);  // the last checkpoint wins
    REQUIRE(rs.final_metrics.at(1) == 0.6);
    REQUIRE(rs.bwt == -0.02);

    const std::string report_csv = (dir / "report.csv").string();
    const std::string table = aggregate_report(runs, report_csv);
    REQUIRE(table.find("casa") != std::string::npos);
    REQUIRE(table.find("none") != std::string::npos);

    std::ifstream csv(report_csv);
    std::string line;
    std::getline(csv, line);
    REQUIRE(line == "policy,quantity,mean,std,runs");
    std::map<std::string, std::pair<double, double>> cells;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        REQUIRE(f.size() == 5);
        cells[f[0] + "/" + f[1]] = {std::stod(f[2]), std::stod(f[3])};
    }
    REQUIRE(cells.at("casa/domain_0").first == Catch::Approx(0.85));
    REQUIRE(cells.at("casa/domain_0").second == Catch::Approx(std::sqrt(0.005)));
    REQUIRE(cells.at("casa/domain_1").first == Catch::Approx(0.65));
    REQUIRE(cells.at("casa/bwt").first == Catch::Approx(-0.03));
    REQUIRE(cells.at("casa/fwt").first == Catch::Approx(0.15));
    REQUIRE(cells.at("none/domain_0").first == Catch::Approx(0.5));
    REQUIRE(cells.at("none/bwt").second == 0.0);

    REQUIRE_THROWS_AS(aggregate_report({}, ""), std::invalid_argument);
    std::filesystem::remove_all(dir);
}
