#include "rlm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rlm/decoder.hpp"
#include "rlm/model.hpp"

namespace rlm {

namespace {

double floor_prob(double p) { return p < kProbFloor ? kProbFloor : p; }

TokenSeq range(const TokenSeq& s, std::size_t begin, std::size_t end) {
  return TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(begin),
                  s.begin() + static_cast<std::ptrdiff_t>(end));
}

std::string dump(const TokenSeq& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
  return os.str();
}

}  // namespace

OracleChoice exhaustive_step_argmax(const ScoringModel& model, const OracleQuery& q) {
  const std::size_t v = model.vocab_size();
  if (v < Vocab::kReservedCount || v - Vocab::kReservedCount > kOracleMaxWords) {
    throw std::invalid_argument("oracle refuses vocab of " + std::to_string(v) +
                                " ids (limit " + std::to_string(kOracleMaxWords) +
                                " words)");
  }
  if (q.position >= q.x.size()) throw std::invalid_argument("oracle query past the source");
  if (q.span_start > q.y.size()) throw std::invalid_argument("oracle span start past Y");

  const TokenSeq x_prefix = range(q.x, 0, q.position);
  const TokenSeq x_suffix = range(q.x, q.position + 1, q.x.size());
  const TokenSeq partial = range(q.y, q.span_start, q.y.size());
  const TokenId target = q.x[q.position];

  OracleChoice best;
  bool have = false;
  for (TokenId tok = 0; tok < v; ++tok) {
    if (tok == Vocab::kPad ? !q.allow_pad : Vocab::is_reserved(tok)) continue;
    // Fresh forward passes per token on purpose.
    const PredictionOutput pred = model.predict(q.y, x_suffix, q.style);
    TokenSeq span = partial;
    if (tok != Vocab::kPad) span.push_back(tok);
    const std::vector<double> recon = model.reconstruct(span, x_prefix, x_suffix);
    const double score = floor_prob(pred.token_probs[tok]) * floor_prob(recon[target]);
    if (!have || score > best.score) {
      best = {tok, score};
      have = true;
    }
  }
  if (!have) throw std::logic_error("oracle found no candidate");
  return best;
}

double independent_score(const ScoringModel& model, const TokenSeq& x,
                         const TokenSeq& y, const std::vector<std::size_t>& t,
                         StyleId style, bool insert, std::size_t max_insert) {
  if (t.size() != x.size() + 1 || t.front() != 0 || t.back() != y.size()) {
    throw std::invalid_argument("invalid alignment");
  }
  double log_score = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (t[i + 1] < t[i]) throw std::invalid_argument("invalid alignment");
    const TokenSeq x_prefix = range(x, 0, i);
    const TokenSeq x_suffix = range(x, i + 1, x.size());
    const std::size_t begin = t[i];
    const std::size_t end = t[i + 1];
    if (begin == end) {
      const PredictionOutput pred = model.predict(range(y, 0, begin), x_suffix, style);
      const std::vector<double> recon = model.reconstruct({}, x_prefix, x_suffix);
      log_score += std::log(floor_prob(pred.token_probs[Vocab::kPad]) *
                            floor_prob(recon[x[i]]));
      continue;
    }
    for (std::size_t j = begin; j < end; ++j) {
      const PredictionOutput pred = model.predict(range(y, 0, j), x_suffix, style);
      const std::vector<double> recon =
          model.reconstruct(range(y, begin, j + 1), x_prefix, x_suffix);
      log_score += std::log(floor_prob(pred.token_probs[y[j]]) * floor_prob(recon[x[i]]));
      if (insert && j - begin < max_insert) {
        const double p = j + 1 < end ? pred.insert_probs[0] : pred.insert_probs[1];
        log_score += std::log(floor_prob(p));
      }
    }
  }
  return log_score;
}

std::string OracleReport::to_json() const {
  nlohmann::ordered_json j;
  j["instances"] = instances;
  j["agreements"] = agreements;
  j["steps"] = steps;
  j["step_agreements"] = step_agreements;
  j["deletions"] = deletions;
  j["insertions"] = insertions;
  j["max_score_divergence"] = max_score_divergence;
  j["worst_instance"] = worst_instance;
  return j.dump();
}

OracleReport run_oracle_check(const OracleCheckConfig& config,
                              const OracleModelSource& source) {
  if (config.max_len == 0) throw std::invalid_argument("oracle check needs max_len >= 1");
  std::mt19937_64 rng(config.seed);
  OracleReport report;
  double worst = -1.0;
  bool mismatch_recorded = false;
  for (std::size_t n = 0; n < config.instances; ++n) {
    const auto model = source(rng);
    const std::size_t words = model->vocab_size() - Vocab::kReservedCount;
    std::uniform_int_distribution<std::size_t> len_dist(1, config.max_len);
    std::uniform_int_distribution<TokenId> word_dist(
        Vocab::kReservedCount, static_cast<TokenId>(Vocab::kReservedCount + words - 1));
    std::bernoulli_distribution coin(0.5);
    TokenSeq x(len_dist(rng));
    for (auto& tok : x) tok = word_dist(rng);
    const StyleId style = coin(rng) ? 1 : 0;
    DecodeFlags flags;
    flags.insert = coin(rng) || n % 4 == 0;
    flags.del = coin(rng) || n % 4 == 0;
    flags.max_insert = 1 + n % 3;
    const std::size_t k = words + 1;

    bool all_agree = true;
    DecoderState st = start_state(x, style);
    while (!st.done()) {
      OracleQuery q{st.x, st.y, st.position, st.alignment.back(), st.style,
                    flags.del && st.run_length == 0};
      const OracleChoice want = exhaustive_step_argmax(*model, q);
      st = decode_step(*model, std::move(st), k, flags);
      ++report.steps;
      const StepTrace& tr = st.trace.back();
      if (tr.chosen.token == Vocab::kPad) ++report.deletions;
      if (tr.insert_continue) ++report.insertions;
      if (tr.chosen.token == want.token) {
        ++report.step_agreements;
      } else {
        all_agree = false;
      }
    }
    const double oracle = independent_score(*model, x, st.y, st.alignment, style,
                                            flags.insert, flags.max_insert);
    const double div = std::abs(st.log_score - oracle) / std::max(1.0, std::abs(oracle));
    report.max_score_divergence = std::max(report.max_score_divergence, div);
    ++report.instances;
    if (all_agree) ++report.agreements;
    const bool record = !all_agree ? !mismatch_recorded : (!mismatch_recorded && div > worst);
    worst = std::max(worst, div);
    if (record) {
      std::ostringstream os;
      os << "instance " << n << " x=[" << dump(x) << "] y=[" << dump(st.y)
         << "] style=" << style << " insert=" << flags.insert << " delete=" << flags.del
         << " decoder=" << st.log_score << " oracle=" << oracle
         << (all_agree ? "" : " step-mismatch");
      report.worst_instance = os.str();
      mismatch_recorded = !all_agree;
    }
  }
  return report;
}

OracleModelSource random_tiny_models(std::size_t words) {
  if (words == 0 || words > kOracleMaxWords) {
    throw std::invalid_argument("random tiny models need 1.." +
                                std::to_string(kOracleMaxWords) + " words");
  }
  return [words](std::mt19937_64& rng) -> std::shared_ptr<const ScoringModel> {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 16;
    cfg.max_len = 32;
    cfg.vocab_size = words + Vocab::kReservedCount;
    cfg.styles = 2;
    cfg.init_std = 0.5;
    cfg.style_init_std = 1.0;
    auto model = std::make_shared<RlmModel>(cfg, rng());
    // Spread the insertion head so both outcomes occur across instances.
    std::normal_distribution<double> bias(0.0, 1.0);
    auto& b = model->params().value("insert.b");
    b[0] = bias(rng);
    b[1] = bias(rng);
    return model;
  };
}

}  // namespace rlm
