#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlm/corpus.hpp"

namespace rlm {

struct BleuResult {
  double score = 0.0;  // 0..100
  bool empty_candidate = false;
  std::vector<double> precisions;  // per order that was counted
  double brevity_penalty = 1.0;
};

/// Corpus BLEU: clipped n-gram counts summed over the corpus, add-one
/// smoothing for orders with zero matches, orders with no candidate n-grams
/// dropped, closest-reference brevity penalty. Case-insensitive.
BleuResult corpus_bleu(const std::vector<Words>& candidates,
                       const std::vector<std::vector<Words>>& references,
                       std::size_t max_n = 4);
/// Single-sentence form of corpus_bleu; an empty candidate scores 0.
double bleu(const Words& candidate, const std::vector<Words>& references,
            std::size_t max_n = 4);

struct Classification {
  std::optional<StyleId> style;  // empty when undecided
  bool conflicting = false;      // markers of more than one style present
};

class StyleClassifier {
 public:
  virtual ~StyleClassifier() = default;
  virtual Classification classify(const Words& sentence) const = 0;
};

/// Marker-lexicon membership: exactly one style's markers present decides.
class RuleClassifier : public StyleClassifier {
 public:
  explicit RuleClassifier(const std::vector<StyleLexicon>& lexicons);
  Classification classify(const Words& sentence) const override;

 private:
  std::map<std::string, StyleId> marker_style_;
};

/// Multinomial logistic regression over token counts, trained by full-batch
/// gradient descent from zero weights.
class LinearClassifier : public StyleClassifier {
 public:
  LinearClassifier(const std::vector<Sentence>& train, std::size_t styles,
                   std::size_t epochs = 200, double lr = 0.5);
  Classification classify(const Words& sentence) const override;

 private:
  std::vector<double> scores(const Words& sentence) const;

  std::map<std::string, std::size_t> index_;
  std::size_t styles_;
  std::vector<double> w_;  // [features x styles]
  std::vector<double> b_;
};

struct AccuracyResult {
  double percent = 0.0;
  std::size_t conflicting = 0;
};

AccuracyResult style_accuracy(const std::vector<Words>& outputs,
                              const std::vector<StyleId>& targets,
                              const StyleClassifier& classifier);

/// Cube root of acc * r_bleu * s_bleu.
double geometric_mean(double acc, double r_bleu, double s_bleu);

struct EvalRow {
  Words source;
  StyleId source_style = 0;
  StyleId target_style = 0;
  Words output;
  bool correct = false;
  bool conflicting = false;
};

struct EvalReport {
  std::string label;
  double acc = 0.0;
  double self_bleu = 0.0;
  double ref_bleu = 0.0;
  double gm = 0.0;
  std::size_t conflicting = 0;
  std::vector<EvalRow> rows;

  nlohmann::ordered_json to_json(const std::vector<std::string>& styles,
                                 bool with_rows) const;
};

/// Rewrites `source` into `target` style.
using TransferFn = std::function<Words(const Words& source, StyleId target)>;

/// Transfers every eval source to each style it has references for and scores
/// the outputs.
EvalReport evaluate(const std::vector<ParallelPair>& eval, const TransferFn& transfer,
                    const StyleClassifier& classifier, std::string label = "");

/// Fixed-width table with one row per report.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace rlm
