#include "protoseg/data/manifest.hpp"

#include <fstream>
#include <string>

#include "protoseg/core/error.hpp"

namespace protoseg::data {

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read case manifest " + path.string());
  std::vector<std::filesystem::path> cases;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(b, e - b + 1);
    if (p.is_relative()) p = path.parent_path() / p;
    cases.push_back(p.lexically_normal());
  }
  if (cases.empty()) throw IoError("case manifest " + path.string() + " lists no cases");
  return cases;
}

void write_manifest(const std::filesystem::path& path, const std::vector<std::filesystem::path>& cases) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write case manifest " + path.string());
  for (const auto& c : cases) out << c.string() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace protoseg::data
