#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "casa/config.hpp"
#include "casa/eval.hpp"
#include "casa/orchestrator.hpp"
#include "casa/stream.hpp"

namespace {

casa::PolicyConfig load_or_default(const std::string& path) {
    if (path.empty()) {
        casa::PolicyConfig c;
        c.validate();
        return c;
    }
    return casa::load_config(path);
}

int cmd_run(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
    const casa::PolicyConfig config = load_or_default(config_path);
    const casa::RunArtifacts art = casa::run_experiment(config, seed);
    casa::write_artifacts(art, config, out_dir);
    std::cout << "policy=" << casa::to_string(art.policy) << " seed=" << art.seed
              << " oracle_calls=" << art.oracle_calls << "/" << art.budget_total
              << " pseudo_domains=" << art.pseudo_domains
              << " bwt=" << casa::fmt_double(art.bwt_value)
              << " fwt=" << casa::fmt_double(art.fwt_value)
              << " certificate=" << casa::fmt_double(art.certificate) << "\n";
    std::cout << "artifacts written to " << out_dir << "\n";
    return 0;
}

int cmd_gen(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
    const casa::PolicyConfig config = load_or_default(config_path);
    const casa::Dataset ds = casa::generate(config.generator_spec(), seed);
    std::filesystem::create_directories(out_dir);
    casa::export_dataset(ds, out_dir);
    std::cout << "dataset written to " << out_dir << " (stream " << ds.stream.size() << ", base "
              << ds.base.size() << ", " << ds.domain_count << " domains)\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
    std::cout << casa::aggregate_report(run_dirs, out_path);
    if (!out_path.empty()) std::cout << "aggregate written to " << out_path << "\n";
    return 0;
}

int cmd_baselines(const std::string& config_path, std::uint64_t seed) {
    const casa::PolicyConfig config = load_or_default(config_path);
    const casa::Dataset ds = casa::generate(config.generator_spec(), seed);
    const casa::UpperBounds ub = casa::train_upper_bounds(
        ds, config.lr, config.base_epochs, config.T, config.mc_passes, config.p_drop, seed);
    std::cout << "dsm";
    for (double v : ub.dsm_row) std::cout << " " << casa::fmt_double(v);
    std::cout << "\njmodel";
    for (double v : ub.jmodel_row) std::cout << " " << casa::fmt_double(v);
    std::cout << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual active learning on domain-shifting streams"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", report_out;
    std::uint64_t seed = 1;
    std::vector<std::string> run_dirs;

    CLI::App* run = app.add_subcommand("run", "run one experiment and write its artifacts");
    run->add_option("--config", config_path, "flat key=value config file");
    run->add_option("--seed", seed, "master seed")->required();
    run->add_option("--out", out_dir, "output directory")->required();

    CLI::App* gen = app.add_subcommand("gen", "generate a dataset as newline-delimited JSON");
    gen->add_option("--config", config_path, "flat key=value config file");
    gen->add_option("--seed", seed, "master seed")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* report = app.add_subcommand("report", "aggregate run directories (mean +/- std)");
    report->add_option("dirs", run_dirs, "run output directories")->required()->expected(-1);
    report->add_option("--out", report_out, "also write report.csv here");

    CLI::App* baselines =
        app.add_subcommand("baselines", "train the fully supervised reference models");
    baselines->add_option("--config", config_path, "flat key=value config file");
    baselines->add_option("--seed", seed, "master seed")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, seed, out_dir);
        if (gen->parsed()) return cmd_gen(config_path, seed, out_dir);
        if (report->parsed()) return cmd_report(run_dirs, report_out);
        if (baselines->parsed()) return cmd_baselines(config_path, seed);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
