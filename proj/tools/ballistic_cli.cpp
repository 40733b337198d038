#include <CLI11.hpp>

#include <iostream>

#include "ballistic/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Ballistic transport toolkit: runs one YAML config, or the bundled demo suite."};
    ballistic::cli::RunOptions opt;
    std::uint64_t seed = 0;
    double tol = 0.0;
    std::string demos;
    app.add_option("--config", opt.config_path, "run config (YAML)")->check(CLI::ExistingFile);
    app.add_option("--out", opt.out_dir, "output directory for result.json and CSV side files");
    auto* seed_opt = app.add_option("--seed", seed, "seed for randomized checks (overrides the config)");
    auto* tol_opt = app.add_option("--tol", tol, "certificate tolerance (overrides the config)")->check(CLI::PositiveNumber);
    app.add_option("--demo-suite", demos, "run every *.yaml in this directory and write a summary table");
    app.footer("exit status: 0 certified, 2 computed but not certified, 1 error");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : ballistic::cli::exit_error;
    }
    if (*seed_opt) opt.seed = seed;
    if (*tol_opt) opt.tol = tol;

    if (!demos.empty()) {
        std::string out = opt.out_dir.empty() ? "demo_out" : opt.out_dir;
        return ballistic::cli::demo_suite(demos, out, opt.seed, std::cout);
    }
    if (opt.config_path.empty()) {
        std::cerr << app.help() << "error: pass --config <path> or --demo-suite <dir>\n";
        return ballistic::cli::exit_error;
    }
    auto r = ballistic::cli::run(opt);
    if (r.exit_code == ballistic::cli::exit_error) {
        std::cerr << "error: " << r.error << "\n";
        return r.exit_code;
    }
    std::cout << (r.out_dir / "result.json").string() << ": " << (r.exit_code == 0 ? "certified" : "NOT certified");
    for (const auto& f : r.result["flags"]) std::cout << "\n  flagged: " << f.get<std::string>();
    std::cout << "\n";
    return r.exit_code;
}
