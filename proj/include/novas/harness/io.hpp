#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace novas::harness {

// SHA-1 over "blob <size>\0<bytes>", the object id git assigns to a file.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Shortest round-trip decimal form; NaN prints as "nan".
std::string format_number(double v);

// Header row on construction, then one row per call; flushed per row so an
// interrupted run keeps everything written so far.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns, bool append = false);

  void row(const std::vector<double>& values);
  void row(const std::vector<std::string>& cells);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
};

struct ManifestInfo {
  std::string verb;
  nlohmann::json config;  // resolved
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> artifacts;
  std::optional<double> wall_seconds;  // omitted when absent
};

// Writes <dir>/manifest.json: config snapshot and its hash, the seed, the
// content hash of every artifact and, optionally, the wall time.
void write_manifest(const std::filesystem::path& dir, const ManifestInfo& info);

// Hash of the parts of a resolved config that affect results.
std::string config_hash(const nlohmann::json& resolved);

}  // namespace novas::harness
