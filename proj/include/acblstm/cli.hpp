#ifndef ACBLSTM_CLI_HPP_
#define ACBLSTM_CLI_HPP_

#include <string>
#include <utility>
#include <vector>

namespace acblstm {

// Exit codes: 0 success, 1 config/data error, 2 usage error, 3 numeric error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point behind the acblstm binary; exposed so tests can fault-inject
/// and check exit codes in-process.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

/// The finite-difference suite behind `acblstm gradcheck`: every layer op
/// plus the full model (batchnorm eval, dropout 0) and the generator loss.
std::vector<std::pair<std::string, double>> gradient_check_suite();

}  // namespace acblstm

#endif  // ACBLSTM_CLI_HPP_
