#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rlm/scoring.hpp"

namespace rlm {

/// Largest ordinary-word count the exhaustive oracle will enumerate.
inline constexpr std::size_t kOracleMaxWords = 512;

/// One decoding step described from scratch: the generated prefix `y`, the
/// start of the current span within it, and whether [PAD] may compete.
struct OracleQuery {
  TokenSeq x;
  TokenSeq y;
  std::size_t position = 0;
  std::size_t span_start = 0;
  StyleId style = 0;
  bool allow_pad = true;
};

struct OracleChoice {
  TokenId token = Vocab::kPad;
  double score = 0.0;
};

/// Scores every ordinary word (and [PAD] when allowed) by direct forward
/// passes and returns the best, lowest id on ties.
OracleChoice exhaustive_step_argmax(const ScoringModel& model, const OracleQuery& q);

/// Straight-line recomputation of the log-score of (X, Y, T).
double independent_score(const ScoringModel& model, const TokenSeq& x,
                         const TokenSeq& y, const std::vector<std::size_t>& alignment,
                         StyleId style, bool insert, std::size_t max_insert);

struct OracleReport {
  std::size_t instances = 0;
  std::size_t agreements = 0;  // instances whose every step agreed
  std::size_t steps = 0;
  std::size_t step_agreements = 0;
  std::size_t deletions = 0;   // steps that chose [PAD]
  std::size_t insertions = 0;  // steps that continued an insertion run
  double max_score_divergence = 0.0;  // |dec - oracle| / max(1, |oracle|)
  std::string worst_instance;

  bool passed(double tolerance) const {
    return agreements == instances && max_score_divergence < tolerance;
  }
  std::string to_json() const;
};

struct OracleCheckConfig {
  std::size_t instances = 200;
  std::size_t vocab = 12;   // ordinary words of random models
  std::size_t max_len = 4;  // source length drawn from [1, max_len]
  std::uint64_t seed = 1;
};

/// Supplies the model for one instance; random-model checks build a fresh
/// tiny model from the rng, checkpoint checks return the same model.
using OracleModelSource =
    std::function<std::shared_ptr<const ScoringModel>(std::mt19937_64&)>;

/// Random-instance agreement check between the decoder (K = V+1) and the
/// oracle, over every step of every instance.
OracleReport run_oracle_check(const OracleCheckConfig& config,
                              const OracleModelSource& source);

/// Tiny random RlmModel source with weights large enough to give peaked,
/// instance-specific distributions.
OracleModelSource random_tiny_models(std::size_t words);

}  // namespace rlm
