#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "coalflow/report.hpp"
#include "coalflow/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"coalflow: coalescing-flow simulation and tube-crossing estimation"};
    app.require_subcommand(1);

    std::string config_path;
    coalflow::runner::Overrides ov;
    long long samples = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
    std::string out_dir;

    auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--samples", samples, "override the sample count");
    run->add_option("--seed", seed, "override the seed")->each([&](const std::string&) { seed_set = true; });
    run->add_option("--threads", threads, "worker pool size (default: available parallelism)");
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--raw", ov.raw, "also write JSON-lines raw replica records");

    std::string report_path;
    std::string format = "table";
    auto* rep = app.add_subcommand("report", "render a report file");
    rep->add_option("report", report_path, "report.json produced by run")->required();
    rep->add_option("--format", format, "table or csv")->check(CLI::IsMember({"table", "csv"}));

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (samples >= 0) ov.samples = samples;
        if (seed_set) ov.seed = seed;
        if (threads >= 0) ov.threads = threads;
        if (!out_dir.empty()) ov.out_dir = out_dir;
        return coalflow::runner::run_from_file(config_path, ov);
    }

    try {
        auto j = coalflow::report::read_json_file(report_path);
        if (format == "csv")
            std::cout << coalflow::report::to_csv(j);
        else
            std::cout << coalflow::report::render_table(j);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
