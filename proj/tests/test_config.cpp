#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "casa/config.hpp"

using namespace casa;

namespace {

PolicyConfig from_text(const std::string& text) {
    std::istringstream in(text);
    return config_from_map(parse_flat_config(in));
}

}  // namespace

TEST_CASE("defaults describe the standard benchmark") {
    const PolicyConfig c;
    REQUIRE(c.policy == Policy::casa);
    REQUIRE(c.B == 8);
    REQUIRE(c.T == 8);
    REQUIRE(c.b == 4);
    REQUIRE(c.beta == 0.1);
    REQUIRE(c.n() == 10);
    REQUIRE(c.u_quantile() == Catch::Approx(0.9));
    REQUIRE(c.k == 0.60);
    REQUIRE(c.P == 5);
    REQUIRE(c.t == 0.0);  // auto-calibrated
    REQUIRE(c.o == 20);
    REQUIRE(c.z == 8);
    REQUIRE(c.e == 30);
    REQUIRE(c.M == 128);
    REQUIRE(c.domains == 4);
    REQUIRE(c.segment_lengths == std::vector<std::size_t>{500, 500, 500, 500});
    REQUIRE(c.schedule == ScheduleMode::gradual);
    REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("flat files parse with comments and stray spaces") {
    std::istringstream in(
        "# a comment line\n"
        "\n"
        "policy = ual   # trailing comment\n"
        "  beta=0.125\n"
        "M =  64\n");
    const auto kv = parse_flat_config(in);
    REQUIRE(kv.size() == 3);
    REQUIRE(kv.at("policy") == "ual");
    REQUIRE(kv.at("beta") == "0.125");
    REQUIRE(kv.at("M") == "64");

    const PolicyConfig c = config_from_map(kv);
    REQUIRE(c.policy == Policy::ual);
    REQUIRE(c.beta == 0.125);
    REQUIRE(c.M == 64);
    REQUIRE(c.n() == 8);
    REQUIRE(c.u_quantile() == Catch::Approx(0.875));
}

TEST_CASE("malformed lines and duplicates are rejected") {
    std::istringstream dup("beta=0.1\nbeta=0.2\n");
    REQUIRE_THROWS_AS(parse_flat_config(dup), std::invalid_argument);
    std::istringstream noeq("beta 0.1\n");
    REQUIRE_THROWS_AS(parse_flat_config(noeq), std::invalid_argument);
    std::istringstream nokey("=0.1\n");
    REQUIRE_THROWS_AS(parse_flat_config(nokey), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("not_a_key=1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("policy=unknown\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("schedule=sorted\n"), std::invalid_argument);
}

TEST_CASE("the labelling stride must agree with the budget") {
    REQUIRE_THROWS_AS(from_text("beta=0.1\nn=7\n"), std::invalid_argument);
    const PolicyConfig ok = from_text("beta=0.1\nn=10\n");
    REQUIRE(ok.n() == 10);
    const PolicyConfig eighth = from_text("beta=0.125\n");
    REQUIRE(eighth.n() == 8);
    const PolicyConfig twentieth = from_text("beta=0.05\n");
    REQUIRE(twentieth.n() == 20);
}

TEST_CASE("a full budget is allowed outside the uncertainty policy") {
    const PolicyConfig nal = from_text("policy=nal\nbeta=1\n");
    REQUIRE(nal.n() == 1);
    REQUIRE_THROWS_AS(from_text("policy=ual\nbeta=1\n"), std::invalid_argument);
    const PolicyConfig ual = from_text("policy=ual\nbeta=1\nu_quantile=0.5\n");
    REQUIRE(ual.u_quantile() == 0.5);
}

TEST_CASE("segment length shorthand expands across all domains") {
    const PolicyConfig c = from_text("domains=3\nsegment_length=120\n");
    REQUIRE(c.segment_lengths == std::vector<std::size_t>{120, 120, 120});
    const PolicyConfig d = from_text("segment_length=80\ndomains=3\n");  // order-free
    REQUIRE(d.segment_lengths == std::vector<std::size_t>{80, 80, 80});
    const PolicyConfig e = from_text("domains=2\nsegment_lengths=100,200\n");
    REQUIRE(e.segment_lengths == std::vector<std::size_t>{100, 200});
    REQUIRE_THROWS_AS(from_text("domains=3\nsegment_lengths=100,200\n"), std::invalid_argument);
}

TEST_CASE("style overrides reach the generator spec") {
    const PolicyConfig c = from_text("domains=2\nsegment_length=50\nstyle1_blur=3.5\nstyle0_gain=0.9\n");
    const GeneratorSpec spec = c.generator_spec();
    REQUIRE(spec.domains.size() == 2);
    REQUIRE(spec.domains[1].style.blur_radius == 3.5);
    REQUIRE(spec.domains[0].style.contrast_gain == 0.9);
    REQUIRE(spec.domains[0].segment_length == 50);

    const PolicyConfig bad_idx = from_text("domains=2\nsegment_length=50\nstyle7_blur=1\n");
    REQUIRE_THROWS_AS(bad_idx.generator_spec(), std::invalid_argument);
    const PolicyConfig bad_param = from_text("domains=2\nsegment_length=50\nstyle0_sharpness=1\n");
    REQUIRE_THROWS_AS(bad_param.generator_spec(), std::invalid_argument);
}

TEST_CASE("invalid settings fail validation") {
    REQUIRE_THROWS_AS(from_text("beta=0\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("beta=1.5\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("mc_passes=1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("base_count=30\ne=30\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("domains=1\nsegment_length=100\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("p_drop=1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("B=0\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("t=-1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("lr=0\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(from_text("M=-5\n"), std::invalid_argument);
}

TEST_CASE("configs serialize with derived values included") {
    const PolicyConfig c = from_text("policy=nal\nbeta=0.2\nstyle0_blur=0.5\n");
    const auto j = c.to_json();
    REQUIRE(j.at("policy") == "nal");
    REQUIRE(j.at("beta") == 0.2);
    REQUIRE(j.at("n") == 5);
    REQUIRE(j.at("u_quantile") == Catch::Approx(0.8));
    REQUIRE(j.at("segment_lengths").size() == 4);
    REQUIRE(j.at("style0_blur") == 0.5);
    REQUIRE(j.at("schedule") == "gradual");
}

TEST_CASE("configs load from files") {
    const auto dir = std::filesystem::temp_directory_path() / "casa_config_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "run.cfg";
    {
        std::ofstream out(path);
        out << "policy=casa\nbeta=0.1\nM=64\ndomains=2\nsegment_length=100\n";
    }
    const PolicyConfig c = load_config(path.string());
    REQUIRE(c.M == 64);
    REQUIRE(c.domains == 2);
    REQUIRE_THROWS_AS(load_config((dir / "missing.cfg").string()), std::runtime_error);
    std::filesystem::remove_all(dir);
}
