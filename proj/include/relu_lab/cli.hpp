#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace relu_lab {

constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 numerical failure, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same, with args excluding the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace relu_lab
