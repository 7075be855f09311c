#pragma once

#include <string>
#include <vector>

namespace tprs {

// All writers go through a temp file + rename so partial output never lands
// under the target name.
void atomic_write_bytes(const std::string& path, const std::string& bytes);
std::string read_bytes(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);
std::string format_double(double v);  // round-trippable %.17g

}  // namespace tprs
