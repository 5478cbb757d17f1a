#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlm/vocab.hpp"

namespace rlm {

using Words = std::vector<std::string>;

/// A noun with the single adjective it takes in each style.
struct NounEntry {
  std::string noun;
  std::vector<std::string> adjectives;  // one per style
};

/// Marker words of one style.
struct StyleLexicon {
  std::string style;
  std::vector<std::string> markers;
  std::vector<std::string> intensifiers;
};

/// Templated grammar. A template is a whitespace-separated string whose slots
/// are CLAUSE (noun, copula, optional intensifier, adjective), NUM and any
/// key of `fillers`.
struct GrammarConfig {
  std::vector<std::string> styles{"pos", "neg"};
  std::vector<NounEntry> nouns;
  std::vector<std::vector<std::string>> intensifiers;  // per style
  std::vector<std::string> templates;
  std::vector<double> template_weights;
  std::map<std::string, std::vector<std::string>> fillers;
  std::vector<std::string> copulas{"was"};
  std::vector<std::string> numbers;
  double intensifier_prob = 0.25;
  std::size_t train_per_style = 2000;
  std::size_t eval_per_style = 100;
  std::size_t max_len = 28;

  static GrammarConfig defaults();
  void validate() const;
  std::vector<StyleLexicon> lexicons() const;
  StyleId style_id(const std::string& name) const;
};

void to_json(nlohmann::json& j, const GrammarConfig& g);
void from_json(const nlohmann::json& j, GrammarConfig& g);

struct Sentence {
  Words tokens;
  StyleId style = 0;
};

/// Eval record: a source with gold rewrites per target style.
struct ParallelPair {
  Words source;
  StyleId style = 0;
  std::map<StyleId, std::vector<Words>> refs;
};

struct Corpus {
  std::vector<std::string> styles;
  std::vector<Sentence> train;
  std::vector<ParallelPair> eval;

  /// Every word of both splits, in first-appearance order.
  Vocab build_vocab() const;
};

Corpus generate_corpus(const GrammarConfig& grammar, std::uint64_t seed);

/// One record per line, '\n' terminated.
std::string train_jsonl(const Corpus& c);
std::string eval_jsonl(const Corpus& c);
Corpus read_corpus(const std::string& train_path, const std::string& eval_path,
                   const std::vector<std::string>& styles);
void write_corpus(const Corpus& c, const std::string& dir);

struct LeakageReport {
  std::size_t references = 0;
  std::size_t leaked = 0;
  double fraction() const { return references ? double(leaked) / double(references) : 0.0; }
  bool flagged() const { return fraction() > 0.05; }
};

LeakageReport check_leakage(const Corpus& c);

/// Per-style word counts over the train split.
class SalienceTable {
 public:
  SalienceTable() = default;
  SalienceTable(const std::vector<Sentence>& train, std::size_t styles, double epsilon = 1.0);
  /// From explicit per-style counts.
  SalienceTable(std::map<std::string, std::vector<double>> counts, std::size_t styles,
                double epsilon);

  /// max over ordered style pairs (a, b) of (count(w|a)+eps)/(count(w|b)+eps);
  /// 1.0 for unseen words.
  double salience(const std::string& word) const;

 private:
  std::map<std::string, std::vector<double>> counts_;
  std::size_t styles_ = 0;
  double epsilon_ = 1.0;
};

/// Frozen pronoun/stopword list excluded from masking.
const std::set<std::string>& default_skip_list();
bool is_number(const std::string& word);

struct MaskPolicy {
  const SalienceTable* salience = nullptr;
  double lambda = 2.0;
  std::set<std::string> skip = default_skip_list();
  /// Chance of masking a uniformly chosen position instead, so the heads also
  /// learn scaffold words and numbers.
  double uniform_prob = 0.0;

  bool maskable(const std::string& word) const;
};

/// Prediction form (X_{0:i}, [MASK], X_{i+1:n}) and reconstruction form
/// (x_i, X_{0:i}, [MASK], X_{i+1:n}) of one masked position.
struct MaskedSample {
  TokenSeq prediction_input;
  TokenSeq reconstruction_input;
  TokenSeq prefix;
  TokenSeq suffix;
  TokenId target = 0;
  StyleId style = 0;
  std::size_t position = 0;
};

std::optional<MaskedSample> make_masked_sample(const Words& sentence, StyleId style,
                                               const Vocab& vocab, std::mt19937_64& rng,
                                               const MaskPolicy& policy);

/// (X_{0:i}, [MASK], X_{i+k:n}) with label [MASK] iff k >= 2.
struct GapSample {
  TokenSeq input;
  TokenSeq prefix;
  TokenSeq suffix;
  std::size_t position = 0;
  std::size_t width = 1;
  TokenId label = Vocab::kPad;
  StyleId style = 0;
};

TokenId gap_label(std::size_t width);
GapSample make_gap_sample(const TokenSeq& sentence, StyleId style, std::mt19937_64& rng,
                          std::size_t max_gap);

/// A spurious [MASK] between two tokens whose prediction target is [PAD].
struct DeletionSample {
  TokenSeq prefix;
  TokenSeq suffix;
  StyleId style = 0;
};

DeletionSample make_deletion_sample(const TokenSeq& sentence, StyleId style,
                                    std::mt19937_64& rng);

struct Batching {
  std::vector<std::vector<std::size_t>> batches;  // indices into the input
  std::size_t max_spread = 0;                     // max intra-batch length spread
};

/// Shuffle, stable sort by length, slice into batches of `batch_size`, then
/// shuffle the batch order.
Batching batch_by_length(const std::vector<std::size_t>& lengths, std::size_t batch_size,
                         std::mt19937_64& rng);

}  // namespace rlm
