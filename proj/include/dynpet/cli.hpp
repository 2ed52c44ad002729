#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace dynpet {

// Exit codes: 0 success, 1 solver or numeric failure, 2 input error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSolverFailure = 1;
inline constexpr int kExitInputError = 2;

struct CliOptions {
    std::string config_path;
    std::string out_dir;  // overrides config io.out_dir when nonempty
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string listmode_path;  // reconstruct: overrides config io.listmode
};

int cmd_simulate(const CliOptions& opt);
int cmd_reconstruct(const CliOptions& opt);
int cmd_sweep_q(const CliOptions& opt);
int cmd_toy_bias(const CliOptions& opt);
int cmd_verify_scaling(const CliOptions& opt);

int run_cli(int argc, char** argv);

}  // namespace dynpet
