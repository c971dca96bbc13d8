#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace thinrecon::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 2,
  kInputError = 3,
  kNumericalFailure = 4,
};

// Runs one command line (without the program name), e.g.
// {"poses", "--colmap-dir", "sparse/0", "--out", "scene.json"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Shell script running COLMAP feature extraction, matching and mapping.
std::string colmap_script(const std::string& images_dir, const std::string& matcher);

}  // namespace thinrecon::cli
