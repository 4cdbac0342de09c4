#include "novas/harness/checkpoint.hpp"

#include <bit>
#include <stdexcept>

#include "novas/harness/io.hpp"

namespace novas::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void append_le(std::string& out, const std::vector<double>& values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(double));
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (std::size_t b = 0; b < 8; ++b) out[start + i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
}

std::vector<double> read_le(const std::string& payload, std::size_t offset, std::size_t count) {
  if ((offset + count) * sizeof(double) > payload.size()) {
    throw std::runtime_error("checkpoint payload is truncated");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[(offset + i) * 8 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

struct Writer {
  std::string payload;
  std::size_t offset = 0;  // in doubles

  json put(const std::vector<double>& values) {
    json slot = {{"offset", offset}, {"count", values.size()}};
    append_le(payload, values);
    offset += values.size();
    return slot;
  }
  json put(const NamedArray& a) {
    json slot = put(a.data);
    slot["name"] = a.name;
    slot["shape"] = a.shape;
    return slot;
  }
};

std::vector<double> take(const std::string& payload, const json& slot) {
  return read_le(payload, slot.at("offset").get<std::size_t>(), slot.at("count").get<std::size_t>());
}

NamedArray take_named(const std::string& payload, const json& slot) {
  NamedArray a{slot.at("name").get<std::string>(), slot.at("shape").get<Shape>(), take(payload, slot)};
  if (numel(a.shape) != a.data.size()) throw std::runtime_error("checkpoint entry '" + a.name + "' has inconsistent size");
  return a;
}

}  // namespace

fs::path checkpoint_stem(const fs::path& path) {
  if (path.extension() == ".json" || path.extension() == ".bin") {
    fs::path stem = path;
    return stem.replace_extension();
  }
  return path;
}

Checkpoint Checkpoint::capture(const nn::NamedParameters& params, const nn::Adam& optimizer) {
  Checkpoint c;
  for (const auto& [name, p] : params) c.parameters.push_back({name, p.shape(), p.to_vector()});
  c.optimizer_steps = optimizer.steps();
  c.first_moments = optimizer.first_moments();
  c.second_moments = optimizer.second_moments();
  return c;
}

void Checkpoint::apply(const nn::NamedParameters& params, nn::Adam* optimizer) const {
  if (params.size() != parameters.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(parameters.size()) + " parameters, model has " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = params[i];
    if (name != parameters[i].name || tensor.shape() != parameters[i].shape) {
      throw std::runtime_error("checkpoint parameter '" + parameters[i].name + "' does not match model parameter '" +
                               name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor tensor = params[i].second;
    auto data = tensor.mutable_data();
    std::copy(parameters[i].data.begin(), parameters[i].data.end(), data.begin());
  }
  if (optimizer) optimizer->restore(optimizer_steps, first_moments, second_moments);
}

void Checkpoint::save(const fs::path& path) const {
  const fs::path stem = checkpoint_stem(path);
  Writer w;
  json doc = summary();
  doc["parameters"] = json::array();
  for (const auto& a : parameters) doc["parameters"].push_back(w.put(a));
  doc["optimizer"]["first_moments"] = json::array();
  for (const auto& m : first_moments) doc["optimizer"]["first_moments"].push_back(w.put(m));
  doc["optimizer"]["second_moments"] = json::array();
  for (const auto& v : second_moments) doc["optimizer"]["second_moments"].push_back(w.put(v));
  doc["extra"] = json::array();
  for (const auto& a : extra) doc["extra"].push_back(w.put(a));

  fs::path bin = stem;
  bin += ".bin";
  fs::path sidecar = stem;
  sidecar += ".json";
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + bin.string() + "'");
    out.write(w.payload.data(), static_cast<std::streamsize>(w.payload.size()));
  }
  doc["payload"] = {{"file", bin.filename().string()}, {"bytes", w.payload.size()},
                    {"hash", content_hash(w.payload)}};
  write_json(sidecar, doc);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  const fs::path stem = checkpoint_stem(path);
  fs::path sidecar = stem;
  sidecar += ".json";
  json doc;
  try {
    doc = json::parse(read_file(sidecar));
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint '" + sidecar.string() + "': " + e.what());
  }
  Checkpoint c;
  c.version = doc.at("format_version").get<int>();
  if (c.version != kFormatVersion) {
    throw std::runtime_error("checkpoint format version " + std::to_string(c.version) + " is not supported");
  }
  const std::string payload = read_file(stem.parent_path() / doc.at("payload").at("file").get<std::string>());
  if (content_hash(payload) != doc.at("payload").at("hash").get<std::string>()) {
    throw std::runtime_error("checkpoint payload hash mismatch for '" + sidecar.string() + "'");
  }
  c.kind = doc.at("kind").get<std::string>();
  c.config_hash = doc.at("config_hash").get<std::string>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.cursor = doc.at("cursor").get<std::size_t>();
  c.meta = doc.at("meta");
  c.optimizer_steps = doc.at("optimizer").at("steps").get<long>();
  for (const auto& slot : doc.at("parameters")) c.parameters.push_back(take_named(payload, slot));
  for (const auto& slot : doc.at("optimizer").at("first_moments")) c.first_moments.push_back(take(payload, slot));
  for (const auto& slot : doc.at("optimizer").at("second_moments")) c.second_moments.push_back(take(payload, slot));
  for (const auto& slot : doc.at("extra")) c.extra.push_back(take_named(payload, slot));
  return c;
}

json Checkpoint::summary() const {
  json params = json::array();
  std::size_t total = 0;
  for (const auto& a : parameters) {
    params.push_back({{"name", a.name}, {"shape", a.shape}});
    total += a.data.size();
  }
  json extras = json::array();
  for (const auto& a : extra) extras.push_back({{"name", a.name}, {"shape", a.shape}});
  return {
      {"format_version", version},
      {"kind", kind},
      {"config_hash", config_hash},
      {"seed", seed},
      {"cursor", cursor},
      {"parameter_count", total},
      {"parameters", params},
      {"optimizer", {{"steps", optimizer_steps}}},
      {"extra", extras},
      {"meta", meta},
  };
}

}  // namespace novas::harness
