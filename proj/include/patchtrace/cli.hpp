#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace patchtrace::cli {

/// Subcommands: ingest stats window rank highlight explain faithfulness
/// curve session-build serve report. Returns the process exit status.
int run(int argc, char** argv);

/// Same, with explicit streams; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchtrace::cli
