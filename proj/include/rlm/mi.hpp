#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rlm/corpus.hpp"
#include "rlm/grad_check.hpp"
#include "rlm/model.hpp"

namespace rlm {

/// Linear style classifier Q(s | c) over content embeddings.
class QClassifier {
 public:
  QClassifier(std::size_t dim, std::size_t styles, std::uint64_t seed, double init_std = 0.02);
  /// Adopts loaded parameters ("q.w" [d x S], "q.b" [1 x S]).
  QClassifier(std::size_t dim, std::size_t styles, ParameterSet params);

  std::size_t dim() const { return dim_; }
  std::size_t styles() const { return styles_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Row-wise log Q(. | c) for c [rows x d].
  Var log_probs(Binder& bind, Var contents) const;
  std::vector<double> log_probs(std::span<const double> c) const;

 private:
  std::size_t dim_;
  std::size_t styles_;
  ParameterSet params_;
};

/// Mean log-probability of each target under its distribution (floored).
double l1_hat(const std::vector<std::vector<double>>& dists,
              const std::vector<TokenId>& targets);
/// Mean log P(x_i | s_bar, c_i) for masked samples under their source style.
double l1_hat(const RlmModel& model, const std::vector<MaskedSample>& batch);

/// CLUB from log Q(s | c_u) rows: positive-pair mean minus all-pairs mean,
/// summed pairwise so a content-blind Q gives exactly 0.
double club_from_log_q(const std::vector<std::vector<double>>& log_q,
                       const std::vector<StyleId>& styles);
double l2_hat(const QClassifier& q, const std::vector<std::vector<double>>& contents,
              const std::vector<StyleId>& styles);

/// Contrastive reconstruction estimate from rows P(. | c'_u), same pairing
/// as CLUB over the targets x_u.
double l3_hat(const std::vector<std::vector<double>>& recon_dists,
              const std::vector<TokenId>& targets);

/// Mean -log dist[target] over (dist, target) pairs.
double recon_nll(const std::vector<std::vector<double>>& dists,
                 const std::vector<TokenId>& targets);

/// Mean log Q(s_bar | c).
double q_loss(const QClassifier& q, const std::vector<std::vector<double>>& contents,
              const std::vector<StyleId>& styles);

/// Mean cross-entropy of {[MASK], [PAD]} decisions against their labels.
double insert_loss(const std::vector<std::array<double, 2>>& probs,
                   const std::vector<TokenId>& labels);

/// Mean log Q(s | c) plus the style entropy H(s): a lower bound on I(s; c).
double ba_lower_surrogate(double mean_log_q, const std::vector<double>& style_prior);

struct LossWeights {
  double beta = 1.0;
  double w_r = 1.0;
  double w_ins = 1.0;
};

struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3_or_recon = 0.0;  // the reconstruction term as it enters total
  double insert = 0.0;
  double total = 0.0;
  LossWeights weights;
};

/// total = -l1 + beta*l2 + w_r*recon + w_ins*insert.
LossBreakdown total_loss(double l1, double l2, double recon, double insert,
                         const LossWeights& w);

enum class ReconMode { kNll, kL3 };

struct LossOptions {
  std::size_t topk = 5;            // reconstruction candidates per sample
  bool club_all_positions = false;  // CLUB over every content row, not just [MASK]
  ReconMode recon = ReconMode::kNll;
};

/// Everything one training sentence contributes.
struct TrainExample {
  MaskedSample masked;
  std::optional<GapSample> gap;
  std::optional<DeletionSample> deletion;
  StyleId other_style = 0;  // style whose predictions supply recon candidates
};

/// Batch-level quantities each example's share of the loss depends on.
struct BatchContext {
  std::size_t size = 0;
  std::vector<double> style_counts;  // n_s over the batch
  std::vector<TokenId> targets;      // x_u of every example, for l3
  std::size_t predictions = 0;       // masked + deletion terms in l1
  std::size_t gaps = 0;               // insert decisions: gap and deletion samples
  LossWeights weights;
  LossOptions options;

  static BatchContext from(const std::vector<TrainExample>& batch, std::size_t styles,
                           const LossWeights& w, const LossOptions& o);
};

/// Values an example contributes to the logged breakdown.
struct ExampleStats {
  std::vector<double> log_pred;         // log P of masked and deletion targets
  std::vector<std::vector<double>> log_q;  // log Q(. | c) per CLUB row
  std::vector<StyleId> q_styles;
  std::vector<double> recon_terms;      // -log P(x | c') per candidate
  std::vector<double> l3_row;           // log P(x_v | c'_u) over the batch targets
  std::vector<double> insert_terms;     // -log P(label) per insert decision
};

/// The example's share of the batch loss. Q is read through `q_bind` behind a
/// detach, so no gradient reaches it.
Var example_loss(Graph& g, Binder& bind, Binder& q_bind, const RlmModel& model,
                 const QClassifier& q, const TrainExample& ex, const BatchContext& ctx,
                 ExampleStats* stats);

/// Breakdown of a whole batch from its example stats.
LossBreakdown summarize(const std::vector<ExampleStats>& stats, const BatchContext& ctx);

/// Sum of every example's loss in one graph.
Var batch_loss(Graph& g, Binder& bind, Binder& q_bind, const RlmModel& model,
               const QClassifier& q, const std::vector<TrainExample>& batch,
               const BatchContext& ctx);

/// Negated mean log Q(s_bar | c) over detached content rows; only Q is bound.
Var q_objective(Graph& g, Binder& q_bind, const QClassifier& q,
                const std::vector<std::vector<double>>& contents,
                const std::vector<StyleId>& styles);

}  // namespace rlm
