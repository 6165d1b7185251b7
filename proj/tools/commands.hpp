#pragma once

#include <iosfwd>

namespace cfner::cli {

/// Entry point shared by the executable and the tests. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cfner::cli
