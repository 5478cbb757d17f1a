#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "rlm/corpus.hpp"
#include "rlm/decoder.hpp"
#include "rlm/mi.hpp"
#include "rlm/model.hpp"

namespace rlm {

struct TrainConfig {
  double lr = 5e-5;
  double q_lr = 5e-5;
  std::size_t batch = 16;
  std::size_t steps = 1000;
  double weight_decay = 0.01;
  LossWeights weights;
  std::size_t topk = 5;  // reconstruction candidates per sample
  std::uint64_t seed = 1;
  std::size_t eval_interval = 500;  // checkpoint every this many steps
  double mask_lambda = 2.0;
  double uniform_mask_prob = 0.0;
  double gap_prob = 1.0;       // chance an example also carries a gap sample
  double deletion_prob = 1.0;  // chance an example also carries a deletion sample
  std::size_t max_gap = 3;
  bool club_all_positions = false;
  ReconMode recon = ReconMode::kNll;

  void validate() const;
};

struct DecodeConfig {
  std::size_t topk = 5;
  DecodeFlags flags;
};

/// Everything a run needs: grammar and seed of the corpus, model shape,
/// training and decoding settings. Missing keys keep their defaults; unknown
/// keys are errors.
struct RunConfig {
  GrammarConfig grammar = GrammarConfig::defaults();
  std::uint64_t corpus_seed = 7;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

/// Raised for malformed configuration or arguments; the CLI maps it to the
/// usage exit code.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace rlm
