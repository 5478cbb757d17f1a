#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rlm/optimizer.hpp"
#include "rlm/parameters.hpp"

namespace rlm {

/// Binary snapshot of a run: "RLMCKPT1", a JSON header (config echo,
/// vocabulary, styles), the step, model and Q parameters and both optimizer
/// states. Doubles are stored as raw little-endian bytes, so a load followed
/// by a save reproduces the file exactly.
struct Checkpoint {
  nlohmann::ordered_json config;
  std::vector<std::string> vocab;  // every id in order, reserved entries first
  std::vector<std::string> styles;
  std::size_t step = 0;
  ParameterSet model;
  ParameterSet q;
  AdamState model_opt;
  AdamState q_opt;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace rlm
