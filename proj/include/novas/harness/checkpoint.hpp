#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "novas/nn/adam.hpp"

namespace novas::harness {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Training state at an outer-step boundary. Saved as <stem>.json (shapes,
// offsets, scalars) next to <stem>.bin (little-endian float64 payload).
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int version = kFormatVersion;
  std::string kind;  // "spen" | "fbsde"
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t cursor = 0;  // completed outer steps; the RNG streams derive from (seed, cursor)
  std::vector<NamedArray> parameters;
  long optimizer_steps = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
  std::vector<NamedArray> extra;  // e.g. best-so-far parameters
  nlohmann::json meta = nlohmann::json::object();

  // Parameter values and Adam state.
  static Checkpoint capture(const nn::NamedParameters& params, const nn::Adam& optimizer);
  // Copies values into params (names and shapes must match) and, if given,
  // restores the optimizer.
  void apply(const nn::NamedParameters& params, nn::Adam* optimizer = nullptr) const;

  // `path` is the stem or either file of the pair.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  // Human-readable index: everything but the payload.
  nlohmann::json summary() const;
};

std::filesystem::path checkpoint_stem(const std::filesystem::path& path);

}  // namespace novas::harness
