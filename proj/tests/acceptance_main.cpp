// Runs the eleven acceptance criteria at full size and prints one line per criterion.
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fastslow/acceptance.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fastslow acceptance checks"};
    fastslow::AcceptanceOptions opt;
    std::vector<std::string> ids = fastslow::criterion_ids();
    app.add_option("--threads", opt.threads, "worker threads");
    app.add_option("--seed", opt.seed, "root seed");
    app.add_option("--scale", opt.scale, "Monte Carlo sample-size scale");
    app.add_option("--criteria", ids, "criterion ids to run");
    CLI11_PARSE(app, argc, argv);

    fastslow::AcceptanceRunner runner(opt);
    int failures = 0;
    for (const auto& id : ids) {
        const fastslow::CriterionResult r = runner.run(id);
        const bool pass = r.pass && r.within_budget();
        if (!pass) ++failures;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << r.id << "  " << r.title << ": "
                  << r.summary << "  [" << std::fixed << std::setprecision(2) << r.seconds << " s";
        if (r.budget > 0.0) std::cout << " / budget " << r.budget << " s";
        std::cout << "]" << std::defaultfloat << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
