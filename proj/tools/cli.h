#ifndef RBIR_TOOLS_CLI_H_
#define RBIR_TOOLS_CLI_H_

#include <iosfwd>

namespace rbir {

// Exit codes: 0 success, 1 usage error, 2 runtime error.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace rbir

#endif  // RBIR_TOOLS_CLI_H_
