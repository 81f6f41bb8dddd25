#pragma once
// Action dispatch behind the command-line tool. Exit codes: 0 success,
// 2 solver failure, 3 configuration error, 64 unknown action.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dpflow {

enum ExitCode : int { exit_ok = 0, exit_solver = 2, exit_config = 3, exit_usage = 64 };

struct RunOverrides {
    std::optional<std::string> out_dir;
    std::optional<double> theta;
    std::optional<std::vector<double>> epsilons;
};

const std::vector<std::string>& known_actions();
std::string usage(const std::string& program);
std::string version_string();

// Runs one action; progress goes to `log`, errors to `err`.
int dispatch(const std::string& action, const std::string& config_path, const RunOverrides& overrides,
             std::ostream& log, std::ostream& err);

} // namespace dpflow
