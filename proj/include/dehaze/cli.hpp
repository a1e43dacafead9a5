#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dehaze::cli {

/// Entry point shared by the `dehaze` executable and the tests.
/// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "HxW" or "HxWx3".
std::pair<std::size_t, std::size_t> parse_size(const std::string& text);

}  // namespace dehaze::cli
