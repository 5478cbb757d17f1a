#pragma once

#include <array>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "rlm/vocab.hpp"

namespace rlm {

/// Output of one prediction pass: the token distribution of H_pred (over the
/// full vocabulary, [PAD] being the deletion class) and the insertion head's
/// {[MASK], [PAD]} distribution taken from the same fused embedding.
struct PredictionOutput {
  std::vector<double> token_probs;
  std::array<double, 2> insert_probs{0.5, 0.5};  // [0] = [MASK], [1] = [PAD]
};

inline constexpr std::size_t kInsertContinue = 0;
inline constexpr std::size_t kInsertStop = 1;

/// [BOS] prefix [MASK] suffix [EOS]
TokenSeq assemble_prediction_input(std::span<const TokenId> prefix,
                                   std::span<const TokenId> suffix);
/// span [BOS] x_prefix [MASK] x_suffix [EOS]; with an empty span this is the
/// prediction input of (x_prefix, x_suffix).
TokenSeq assemble_reconstruction_input(std::span<const TokenId> span,
                                       std::span<const TokenId> x_prefix,
                                       std::span<const TokenId> x_suffix);

/// What the decoder and the oracle need from a model.
class ScoringModel {
 public:
  virtual ~ScoringModel() = default;

  /// Size of the id space, reserved ids included.
  virtual std::size_t vocab_size() const = 0;
  virtual PredictionOutput predict(std::span<const TokenId> prefix,
                                   std::span<const TokenId> suffix,
                                   StyleId style) const = 0;
  /// Distribution over the vocabulary for the token behind [MASK].
  virtual std::vector<double> reconstruct(std::span<const TokenId> span,
                                          std::span<const TokenId> x_prefix,
                                          std::span<const TokenId> x_suffix) const = 0;
};

/// Probability tables keyed by assembled input sequences, with fallbacks for
/// unlisted inputs. Every row must be normalized.
class StubModel : public ScoringModel {
 public:
  explicit StubModel(std::size_t vocab_size);

  void set_default_prediction(PredictionOutput out);
  void set_default_reconstruction(std::vector<double> dist);
  void set_prediction(std::span<const TokenId> prefix, std::span<const TokenId> suffix,
                      StyleId style, PredictionOutput out);
  void set_reconstruction(std::span<const TokenId> span,
                          std::span<const TokenId> x_prefix,
                          std::span<const TokenId> x_suffix, std::vector<double> dist);

  std::size_t vocab_size() const override { return vocab_size_; }
  PredictionOutput predict(std::span<const TokenId> prefix,
                           std::span<const TokenId> suffix,
                           StyleId style) const override;
  std::vector<double> reconstruct(std::span<const TokenId> span,
                                  std::span<const TokenId> x_prefix,
                                  std::span<const TokenId> x_suffix) const override;

 private:
  void check_row(std::span<const double> row) const;

  std::size_t vocab_size_;
  PredictionOutput default_prediction_;
  std::vector<double> default_reconstruction_;
  std::map<std::pair<TokenSeq, StyleId>, PredictionOutput> predictions_;
  std::map<TokenSeq, std::vector<double>> reconstructions_;
};

/// Uniform distribution over ids [0, size).
std::vector<double> uniform_dist(std::size_t size);
/// Point mass of `mass` on `id`, the rest spread evenly over the other ids.
std::vector<double> peaked_dist(std::size_t size, TokenId id, double mass);

}  // namespace rlm
