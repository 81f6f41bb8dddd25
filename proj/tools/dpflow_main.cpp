#include "dpflow/config.hpp"
#include "dpflow/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

int main(int argc, char** argv)
{
    CLI::App app{"Double-porosity two-phase flow toolkit", "dpflow"};
    app.set_version_flag("--version", dpflow::version_string());

    std::string action;
    std::string config;
    std::string out_dir;
    double theta = 0.0;
    std::string epsilons;
    app.add_option("action", action, "curves | homogenize | macro | micro | block-demo | convergence")->required();
    app.add_option("--config", config, "scenario file")->required();
    auto* out_opt = app.add_option("--out-dir", out_dir, "output directory (overrides [output] directory)");
    auto* theta_opt = app.add_option("--theta", theta, "contrast exponent theta > 0");
    auto* eps_opt = app.add_option("--epsilon", epsilons, "comma-separated epsilon list, e.g. 1/8,1/16");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << dpflow::usage("dpflow");
        return dpflow::exit_usage;
    }

    dpflow::RunOverrides overrides;
    if (*out_opt)
        overrides.out_dir = out_dir;
    if (*theta_opt)
        overrides.theta = theta;
    if (*eps_opt) {
        std::vector<double> list;
        std::istringstream in(epsilons);
        std::string item;
        while (std::getline(in, item, ',')) {
            const auto v = dpflow::parse_number(item);
            if (!v) {
                std::cerr << "config error: bad --epsilon entry '" << item << "'\n";
                return dpflow::exit_config;
            }
            list.push_back(*v);
        }
        overrides.epsilons = list;
    }
    return dpflow::dispatch(action, config, overrides, std::cout, std::cerr);
}
