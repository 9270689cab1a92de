#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace film::cli {

/// Entry point of the `film` executable. args excludes the program name.
/// Returns 0 on success, 1 on a runtime failure (one JSON line on err), 2 on a
/// usage error (usage text plus one JSON line on err).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace film::cli
