#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tscx {

/// Entry point behind the tscx binary; `args` excludes the program name.
/// Exit codes: 0 success, 1 usage error (help printed), 2 data error,
/// 3 numeric failure (diverged loss).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tscx
