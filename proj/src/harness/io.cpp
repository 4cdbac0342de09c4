#include "novas/harness/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace novas::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string content_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : std::string_view(reinterpret_cast<char*>(digest), length)) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const fs::path& path) { return content_hash(read_file(path)); }

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const fs::path& path, std::vector<std::string> columns, bool append)
    : columns_(std::move(columns)) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (fresh) row(columns_);
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  for (double v : values) cells.push_back(format_number(v));
  row(cells);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_.size()) {
    throw std::invalid_argument("csv row has " + std::to_string(cells.size()) + " cells, expected " +
                                std::to_string(columns_.size()));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  out_.flush();
}

std::string config_hash(const json& resolved) {
  json doc = resolved;
  for (const char* key : {"output", "checkpoint", "resume", "jobs"}) doc.erase(key);
  return content_hash(doc.dump());
}

void write_manifest(const fs::path& dir, const ManifestInfo& info) {
  json artifacts = json::object();
  for (const auto& path : info.artifacts) {
    artifacts[fs::relative(path, dir).generic_string()] = file_hash(path);
  }
  json doc = {
      {"verb", info.verb},
      {"seed", info.seed},
      {"config", info.config},
      {"config_hash", config_hash(info.config)},
      {"artifacts", artifacts},
  };
  if (info.wall_seconds) doc["wall_seconds"] = *info.wall_seconds;
  write_json(dir / "manifest.json", doc);
}

}  // namespace novas::harness
