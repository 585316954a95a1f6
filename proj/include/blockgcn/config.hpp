#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace blockgcn {

// Flat key=value text format used for config files, dataset manifests, and
// report headers. '#' starts a comment; blank lines are skipped.
std::map<std::string, std::string> parse_kv_text(std::istream& is, const std::string& origin);
std::map<std::string, std::string> parse_kv_file(const std::string& path);
void write_kv(std::ostream& os, const std::map<std::string, std::string>& kv);
void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);

// Applies "key=value" strings (e.g. from repeated --set flags) on top of kv.
void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& overrides);

}  // namespace blockgcn
