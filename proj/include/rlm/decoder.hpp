#pragma once

#include <cstddef>
#include <vector>

#include "rlm/scoring.hpp"

namespace rlm {

struct DecodeFlags {
  bool insert = true;
  bool del = true;
  std::size_t max_insert = 4;
};

struct Candidate {
  TokenId token = Vocab::kPad;
  double pred_prob = 0.0;   // floored
  double recon_prob = 0.0;  // floored
  double combined = 0.0;    // pred_prob * recon_prob
};

struct StepTrace {
  std::size_t position = 0;
  Candidate chosen;
  std::vector<Candidate> pool;
  bool insert_consulted = false;
  bool insert_continue = false;
  double insert_prob = 1.0;  // factor of the chosen insert outcome, 1 if not consulted
  double score = 0.0;        // chosen.combined * insert_prob
};

/// Greedy replacing decoder state. `alignment` holds T_0..T_i; the span for
/// the current source position starts at alignment.back().
struct DecoderState {
  TokenSeq x;
  StyleId style = 0;
  TokenSeq y;
  std::vector<std::size_t> alignment{0};
  std::size_t position = 0;
  std::size_t run_length = 0;  // tokens already emitted for `position`
  std::vector<StepTrace> trace;
  double log_score = 0.0;

  bool done() const { return position == x.size(); }
  /// Tokens inserted beyond the first for the current position.
  std::size_t insert_count() const { return run_length > 0 ? run_length - 1 : 0; }
};

struct TransferResult {
  TokenSeq y;
  std::vector<std::size_t> alignment;  // n + 1 entries, back() == y.size()
  double log_score = 0.0;
  std::vector<StepTrace> trace;
};

DecoderState start_state(TokenSeq x, StyleId style);

/// Prediction factor under the state's context times the reconstruction
/// factor of x_i given the partial span extended by `y`.
Candidate score_candidate(const ScoringModel& model, const DecoderState& state,
                          TokenId y);

/// Top-K pool by prediction probability, rescored by the full product and
/// returned score-descending. Ties go to the lowest id at both stages.
std::vector<Candidate> topk_candidates(const ScoringModel& model,
                                       const DecoderState& state, std::size_t k,
                                       const DecodeFlags& flags);

DecoderState decode_step(const ScoringModel& model, DecoderState state,
                         std::size_t k, const DecodeFlags& flags);

TransferResult transfer(const ScoringModel& model, const TokenSeq& x, StyleId style,
                        std::size_t k, const DecodeFlags& flags);

/// Throws std::invalid_argument unless `alignment` is a valid alignment of
/// (x, y) under the flags.
void validate_alignment(const TokenSeq& x, const TokenSeq& y,
                        const std::vector<std::size_t>& alignment,
                        const DecodeFlags& flags);

/// log P(Y | X, s) recomputed from scratch, chaining token factors and the
/// insertion continue/stop factors the decoder would have consulted.
double sequence_score(const ScoringModel& model, const TokenSeq& x, const TokenSeq& y,
                      const std::vector<std::size_t>& alignment, StyleId style,
                      const DecodeFlags& flags);

}  // namespace rlm
