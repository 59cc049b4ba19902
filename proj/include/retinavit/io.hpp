#pragma once

#include <string>

namespace retinavit {

// Temp file + rename in the target directory. With overwrite=false an
// existing target is an error.
void atomic_write_file(const std::string& path, const std::string& contents,
                       bool overwrite);

std::string read_file(const std::string& path);

}  // namespace retinavit
