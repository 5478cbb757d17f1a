#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rlm/checkpoint.hpp"
#include "rlm/config.hpp"
#include "rlm/mi.hpp"
#include "rlm/model.hpp"
#include "rlm/optimizer.hpp"

namespace rlm {

struct StepRecord {
  std::size_t step = 0;  // 1-based index of the completed step
  LossBreakdown loss;
  double q_loss = 0.0;  // -mean log Q(s_bar | c) before the Q update
  std::size_t examples = 0;

  nlohmann::ordered_json to_json() const;
};

/// Alternating optimization of the model and the CLUB classifier Q. Every
/// random draw of step t comes from (train.seed, t), so a run resumed from a
/// checkpoint repeats the uninterrupted run exactly.
class Trainer {
 public:
  Trainer(RunConfig config, const Corpus& corpus);
  /// Resumes from a checkpoint; the corpus must use the checkpoint's
  /// vocabulary.
  Trainer(const Checkpoint& ckpt, const Corpus& corpus);

  const RunConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const RlmModel& model() const { return *model_; }
  const QClassifier& q() const { return *q_; }
  std::size_t step_count() const { return step_; }

  /// Examples of step `step` (0-based).
  std::vector<TrainExample> make_batch(std::size_t step) const;

  /// One AdamW step of the model on the total loss, Q frozen. Throws
  /// std::runtime_error with diagnostics if the loss or a gradient is not
  /// finite.
  LossBreakdown main_step(const std::vector<TrainExample>& batch);
  /// One AdamW step of Q on -mean log Q(s_bar | c) over detached contents.
  /// Returns the objective before the update.
  double q_step(const std::vector<TrainExample>& batch);

  /// q_step then main_step on the next batch.
  StepRecord step();

  Checkpoint checkpoint() const;

 private:
  void init_common(const Corpus& corpus);
  const Batching& epoch_batches(std::size_t epoch) const;

  RunConfig config_;
  std::vector<std::string> styles_;
  Vocab vocab_;
  std::vector<Words> sentences_;
  std::vector<TokenSeq> encoded_;
  std::vector<StyleId> sentence_styles_;
  SalienceTable salience_;
  std::unique_ptr<RlmModel> model_;
  std::unique_ptr<QClassifier> q_;
  std::unique_ptr<AdamW> model_opt_;
  std::unique_ptr<AdamW> q_opt_;
  std::size_t step_ = 0;
  mutable std::map<std::size_t, Batching> epochs_;
};

/// One AdamW step of Q on -mean log Q(s_bar | c) over constant contents.
/// Returns the objective before the update.
double q_update(QClassifier& q, AdamW& opt, const std::vector<std::vector<double>>& contents,
                const std::vector<StyleId>& styles);

/// Runs until config.train.steps, appending one JSON record per step to
/// `out_dir`/metrics.jsonl and saving `out_dir`/ckpt-<step>.bin every eval
/// interval plus `out_dir`/final.bin. An empty out_dir writes nothing.
Checkpoint run_training(Trainer& trainer, const std::string& out_dir,
                        const std::function<void(const StepRecord&)>& on_step = {});

/// Model configuration completed from a checkpoint's vocabulary and styles.
RlmModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rlm
