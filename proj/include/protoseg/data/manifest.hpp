#pragma once

#include <filesystem>
#include <vector>

namespace protoseg::data {

/// Plain-text case list, one case directory per line. Blank lines and lines
/// starting with '#' are skipped; relative entries resolve against the
/// manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<std::filesystem::path>& cases);

}  // namespace protoseg::data
