#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rlm/autodiff.hpp"
#include "rlm/grad_check.hpp"
#include "rlm/parameters.hpp"
#include "rlm/scoring.hpp"
#include "rlm/vocab.hpp"

namespace rlm {

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 256;
  std::size_t max_len = 32;
  std::size_t vocab_size = 0;
  std::size_t styles = 2;
  double init_std = 0.02;
  double style_init_std = 0.02;
  double ln_eps = 1e-5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// c_i or c'_i: the content vector read off the [MASK] slot (or any other
/// slot, for the fusion block's context).
struct ContentEmbedding {
  std::vector<double> values;
  std::size_t position = 0;
};

/// e_i = f(s, c_i).
struct FusedEmbedding {
  std::vector<double> values;
};

/// Encoder, content-extraction block, style table, fusion block and the three
/// heads. Parameters live in one ParameterSet; graph-level methods bind them
/// through a Binder so the same code serves training and inference.
class RlmModel : public ScoringModel {
 public:
  RlmModel(ModelConfig config, std::uint64_t seed);
  /// Adopts loaded parameters; throws if any name or shape disagrees with
  /// the config.
  RlmModel(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Expected parameter layout for a config, in registration order.
  static ParameterSet layout(const ModelConfig& config);

  struct Encoded {
    Var contents;  // [L x d] content-block outputs for every slot
    std::size_t mask_pos = 0;
  };

  Encoded encode(Binder& bind, std::span<const TokenId> ids) const;
  Var fuse(Binder& bind, StyleId style, Var contents, std::size_t pos) const;
  Var prediction_logits(Binder& bind, Var fused) const;
  Var reconstruction_logits(Binder& bind, Var content) const;
  Var insertion_logits(Binder& bind, Var fused) const;

  ContentEmbedding encode_content(std::span<const TokenId> prefix,
                                  std::span<const TokenId> suffix) const;
  /// Content embeddings of every slot of (prefix, [MASK], suffix) with
  /// [BOS]/[EOS] framing; `mask_index` receives the [MASK] slot.
  std::vector<ContentEmbedding> encode_content_sequence(
      std::span<const TokenId> prefix, std::span<const TokenId> suffix,
      std::size_t* mask_index) const;
  ContentEmbedding encode_reconstruction(std::span<const TokenId> span,
                                         std::span<const TokenId> x_prefix,
                                         std::span<const TokenId> x_suffix) const;
  FusedEmbedding fuse(StyleId style, const std::vector<ContentEmbedding>& contents,
                      std::size_t i) const;
  std::vector<double> predict_token(const FusedEmbedding& e) const;
  std::vector<double> reconstruct_token(const ContentEmbedding& c_prime) const;
  std::array<double, 2> insert_decision(const FusedEmbedding& e) const;

  /// Full prediction pass for (prefix, [MASK], suffix) under `style`.
  std::size_t vocab_size() const override { return config_.vocab_size; }
  PredictionOutput predict(std::span<const TokenId> prefix,
                           std::span<const TokenId> suffix,
                           StyleId style) const override;
  /// Full reconstruction pass; distribution over the vocabulary.
  std::vector<double> reconstruct(std::span<const TokenId> span,
                                  std::span<const TokenId> x_prefix,
                                  std::span<const TokenId> x_suffix) const override;

 private:
  void check_length(std::size_t len) const;
  Var self_attention(Binder& bind, const std::string& prefix, Var x,
                     std::size_t heads) const;

  ModelConfig config_;
  ParameterSet params_;
};

}  // namespace rlm
