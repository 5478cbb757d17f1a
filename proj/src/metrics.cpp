#include "rlm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "rlm/tensor.hpp"

namespace rlm {

namespace {

Words lowered(const Words& w) {
  Words out = w;
  for (auto& t : out) {
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  return out;
}

std::map<Words, std::size_t> ngrams(const Words& w, std::size_t n) {
  std::map<Words, std::size_t> out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    ++out[Words(w.begin() + static_cast<std::ptrdiff_t>(i),
                w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<Words>& candidates,
                       const std::vector<std::vector<Words>>& references, std::size_t max_n) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu needs one reference set per candidate");
  }
  if (max_n == 0) throw std::invalid_argument("bleu max_n must be >= 1");
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    if (references[s].empty()) throw std::invalid_argument("bleu candidate without references");
    const Words cand = lowered(candidates[s]);
    std::vector<Words> refs;
    for (const auto& r : references[s]) refs.push_back(lowered(r));
    cand_len += static_cast<double>(cand.size());
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
        best = r.size();
      }
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto counts = ngrams(cand, n);
      std::map<Words, std::size_t> max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : counts) {
        totals[n - 1] += static_cast<double>(c);
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matches[n - 1] += static_cast<double>(std::min(c, it->second));
      }
    }
  }
  BleuResult r;
  if (cand_len == 0.0) {
    r.empty_candidate = true;
    r.brevity_penalty = 0.0;
    return r;
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (totals[n] == 0.0) continue;
    const double p = matches[n] > 0.0 ? matches[n] / totals[n] : 1.0 / (totals[n] + 1.0);
    r.precisions.push_back(p);
    log_sum += std::log(p);
  }
  r.brevity_penalty = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  r.score = 100.0 * r.brevity_penalty *
            std::exp(log_sum / static_cast<double>(r.precisions.size()));
  return r;
}

double bleu(const Words& candidate, const std::vector<Words>& references, std::size_t max_n) {
  return corpus_bleu({candidate}, {references}, max_n).score;
}

RuleClassifier::RuleClassifier(const std::vector<StyleLexicon>& lexicons) {
  for (std::size_t s = 0; s < lexicons.size(); ++s) {
    for (const auto& m : lexicons[s].markers) {
      auto [it, fresh] = marker_style_.emplace(m, static_cast<StyleId>(s));
      if (!fresh && it->second != s) {
        throw std::invalid_argument("marker '" + m + "' belongs to two styles");
      }
    }
  }
}

Classification RuleClassifier::classify(const Words& sentence) const {
  std::set<StyleId> seen;
  for (const auto& w : lowered(sentence)) {
    if (auto it = marker_style_.find(w); it != marker_style_.end()) seen.insert(it->second);
  }
  Classification c;
  if (seen.size() == 1) c.style = *seen.begin();
  c.conflicting = seen.size() > 1;
  return c;
}

LinearClassifier::LinearClassifier(const std::vector<Sentence>& train, std::size_t styles,
                                   std::size_t epochs, double lr)
    : styles_(styles) {
  if (styles < 2) throw std::invalid_argument("classifier needs at least two styles");
  for (const auto& s : train) {
    for (const auto& w : lowered(s.tokens)) index_.emplace(w, index_.size());
  }
  w_.assign(index_.size() * styles, 0.0);
  b_.assign(styles, 0.0);
  if (train.empty()) return;
  const double inv = 1.0 / static_cast<double>(train.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> gw(w_.size(), 0.0), gb(styles, 0.0);
    for (const auto& s : train) {
      const Words toks = lowered(s.tokens);
      auto p = softmax(scores(toks));
      p[s.style] -= 1.0;
      for (const auto& t : toks) {
        const std::size_t f = index_.at(t);
        for (std::size_t k = 0; k < styles; ++k) gw[f * styles + k] += p[k] * inv;
      }
      for (std::size_t k = 0; k < styles; ++k) gb[k] += p[k] * inv;
    }
    for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= lr * gw[i];
    for (std::size_t k = 0; k < styles; ++k) b_[k] -= lr * gb[k];
  }
}

std::vector<double> LinearClassifier::scores(const Words& toks) const {
  std::vector<double> z = b_;
  for (const auto& t : toks) {
    auto it = index_.find(t);
    if (it == index_.end()) continue;
    for (std::size_t k = 0; k < styles_; ++k) z[k] += w_[it->second * styles_ + k];
  }
  return z;
}

Classification LinearClassifier::classify(const Words& sentence) const {
  const auto z = scores(lowered(sentence));
  Classification c;
  c.style = static_cast<StyleId>(std::max_element(z.begin(), z.end()) - z.begin());
  return c;
}

AccuracyResult style_accuracy(const std::vector<Words>& outputs,
                              const std::vector<StyleId>& targets,
                              const StyleClassifier& classifier) {
  if (outputs.size() != targets.size()) {
    throw std::invalid_argument("style_accuracy needs one target per output");
  }
  AccuracyResult r;
  if (outputs.empty()) return r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto c = classifier.classify(outputs[i]);
    if (c.conflicting) ++r.conflicting;
    if (!c.conflicting && c.style == targets[i]) ++correct;
  }
  r.percent = 100.0 * static_cast<double>(correct) / static_cast<double>(outputs.size());
  return r;
}

double geometric_mean(double acc, double r_bleu, double s_bleu) {
  if (acc < 0.0 || r_bleu < 0.0 || s_bleu < 0.0) {
    throw std::invalid_argument("geometric mean needs non-negative inputs");
  }
  return std::cbrt(acc * r_bleu * s_bleu);
}

EvalReport evaluate(const std::vector<ParallelPair>& eval, const TransferFn& transfer,
                    const StyleClassifier& classifier, std::string label) {
  EvalReport rep;
  rep.label = std::move(label);
  std::vector<Words> outputs;
  std::vector<StyleId> targets;
  std::vector<std::vector<Words>> self_refs, gold_refs;
  for (const auto& p : eval) {
    for (const auto& [target, refs] : p.refs) {
      EvalRow row;
      row.source = p.source;
      row.source_style = p.style;
      row.target_style = target;
      row.output = transfer(p.source, target);
      const auto c = classifier.classify(row.output);
      row.conflicting = c.conflicting;
      row.correct = !c.conflicting && c.style == target;
      outputs.push_back(row.output);
      targets.push_back(target);
      self_refs.push_back({p.source});
      gold_refs.push_back(refs);
      rep.rows.push_back(std::move(row));
    }
  }
  if (outputs.empty()) throw std::invalid_argument("eval split has no references");
  const auto acc = style_accuracy(outputs, targets, classifier);
  rep.acc = acc.percent;
  rep.conflicting = acc.conflicting;
  rep.self_bleu = corpus_bleu(outputs, self_refs).score;
  rep.ref_bleu = corpus_bleu(outputs, gold_refs).score;
  rep.gm = geometric_mean(rep.acc, rep.ref_bleu, rep.self_bleu);
  return rep;
}

nlohmann::ordered_json EvalReport::to_json(const std::vector<std::string>& styles,
                                           bool with_rows) const {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["acc"] = acc;
  j["ref_bleu"] = ref_bleu;
  j["self_bleu"] = self_bleu;
  j["gm"] = gm;
  j["count"] = rows.size();
  j["conflicting"] = conflicting;
  if (with_rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json o;
      o["tokens"] = r.source;
      o["style"] = styles.at(r.source_style);
      o["target"] = styles.at(r.target_style);
      o["output"] = r.output;
      o["correct"] = r.correct;
      o["conflicting"] = r.conflicting;
      arr.push_back(std::move(o));
    }
    j["rows"] = std::move(arr);
  }
  return j;
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 7;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %7s %7s %7s %7s\n", static_cast<int>(width), "setting",
                "ACC", "R-BLEU", "S-BLEU", "GM");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s %7.1f %7.1f %7.1f %7.1f\n", static_cast<int>(width),
                  r.label.c_str(), r.acc, r.ref_bleu, r.self_bleu, r.gm);
    out += buf;
  }
  return out;
}

}  // namespace rlm
