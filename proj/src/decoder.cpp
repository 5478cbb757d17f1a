#include "rlm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rlm/tensor.hpp"

namespace rlm {

namespace {

double floored(double p) { return std::max(p, kProbFloor); }

std::span<const TokenId> slice(const TokenSeq& s, std::size_t begin, std::size_t end) {
  return std::span<const TokenId>(s).subspan(begin, end - begin);
}

// Reconstruction factor for x_i given the span emitted so far plus `y`
// ([PAD] contributes no token).
double recon_factor(const ScoringModel& model, const DecoderState& st, TokenId y) {
  const std::size_t i = st.position;
  TokenSeq span(st.y.begin() + static_cast<std::ptrdiff_t>(st.alignment.back()),
                st.y.end());
  if (y != Vocab::kPad) span.push_back(y);
  const auto dist = model.reconstruct(span, slice(st.x, 0, i),
                                      slice(st.x, i + 1, st.x.size()));
  return dist.at(st.x[i]);
}

PredictionOutput predict_here(const ScoringModel& model, const DecoderState& st) {
  return model.predict(st.y, slice(st.x, st.position + 1, st.x.size()), st.style);
}

struct StepEval {
  PredictionOutput pred;
  std::vector<Candidate> ranked;
};

StepEval evaluate_step(const ScoringModel& model, const DecoderState& st,
                       std::size_t k, const DecodeFlags& flags) {
  if (k == 0) throw std::invalid_argument("top-K needs K >= 1");
  if (st.done()) throw std::logic_error("decode complete");
  StepEval out;
  out.pred = predict_here(model, st);
  const auto& probs = out.pred.token_probs;
  if (probs.size() != model.vocab_size()) {
    throw std::logic_error("prediction distribution has wrong size");
  }

  std::vector<TokenId> pool;
  if (flags.del && st.run_length == 0) pool.push_back(Vocab::kPad);
  for (TokenId id = Vocab::kReservedCount; id < probs.size(); ++id) pool.push_back(id);

  const std::size_t keep = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep),
                    pool.end(), [&](TokenId a, TokenId b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  pool.resize(keep);

  for (TokenId y : pool) {
    Candidate c;
    c.token = y;
    c.pred_prob = floored(probs[y]);
    c.recon_prob = floored(recon_factor(model, st, y));
    c.combined = c.pred_prob * c.recon_prob;
    out.ranked.push_back(c);
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.combined != b.combined) return a.combined > b.combined;
                     return a.token < b.token;
                   });
  return out;
}

}  // namespace

DecoderState start_state(TokenSeq x, StyleId style) {
  if (x.empty()) throw std::invalid_argument("cannot transfer an empty sentence");
  for (TokenId t : x) {
    if (Vocab::is_reserved(t)) throw std::invalid_argument("source contains a reserved token");
  }
  DecoderState st;
  st.x = std::move(x);
  st.style = style;
  return st;
}

Candidate score_candidate(const ScoringModel& model, const DecoderState& state,
                          TokenId y) {
  if (state.done()) throw std::logic_error("decode complete");
  const auto pred = predict_here(model, state);
  Candidate c;
  c.token = y;
  c.pred_prob = floored(pred.token_probs.at(y));
  c.recon_prob = floored(recon_factor(model, state, y));
  c.combined = c.pred_prob * c.recon_prob;
  return c;
}

std::vector<Candidate> topk_candidates(const ScoringModel& model,
                                       const DecoderState& state, std::size_t k,
                                       const DecodeFlags& flags) {
  return evaluate_step(model, state, k, flags).ranked;
}

DecoderState decode_step(const ScoringModel& model, DecoderState st, std::size_t k,
                         const DecodeFlags& flags) {
  StepEval ev = evaluate_step(model, st, k, flags);
  StepTrace tr;
  tr.position = st.position;
  tr.chosen = ev.ranked.front();
  tr.pool = std::move(ev.ranked);

  bool close = true;
  if (tr.chosen.token != Vocab::kPad) {
    st.y.push_back(tr.chosen.token);
    ++st.run_length;
    if (flags.insert && st.insert_count() < flags.max_insert) {
      const auto& ins = ev.pred.insert_probs;
      tr.insert_consulted = true;
      tr.insert_continue = ins[kInsertContinue] > ins[kInsertStop];
      tr.insert_prob = floored(tr.insert_continue ? ins[kInsertContinue] : ins[kInsertStop]);
      close = !tr.insert_continue;
    }
  }
  tr.score = tr.chosen.combined * tr.insert_prob;
  st.log_score += std::log(tr.chosen.combined) + std::log(tr.insert_prob);
  st.trace.push_back(std::move(tr));

  if (close) {
    st.alignment.push_back(st.y.size());
    ++st.position;
    st.run_length = 0;
  }
  return st;
}

TransferResult transfer(const ScoringModel& model, const TokenSeq& x, StyleId style,
                        std::size_t k, const DecodeFlags& flags) {
  DecoderState st = start_state(x, style);
  while (!st.done()) st = decode_step(model, std::move(st), k, flags);
  return {std::move(st.y), std::move(st.alignment), st.log_score, std::move(st.trace)};
}

void validate_alignment(const TokenSeq& x, const TokenSeq& y,
                        const std::vector<std::size_t>& t, const DecodeFlags& flags) {
  if (x.empty()) throw std::invalid_argument("invalid alignment: empty source");
  if (t.size() != x.size() + 1) {
    throw std::invalid_argument("invalid alignment: expected " +
                                std::to_string(x.size() + 1) + " entries, got " +
                                std::to_string(t.size()));
  }
  if (t.front() != 0) throw std::invalid_argument("invalid alignment: T_0 != 0");
  if (t.back() != y.size()) throw std::invalid_argument("invalid alignment: T_n != |Y|");
  const std::size_t max_span = flags.insert ? flags.max_insert + 1 : 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (t[i + 1] < t[i]) throw std::invalid_argument("invalid alignment: not monotone");
    const std::size_t len = t[i + 1] - t[i];
    if (len == 0 && !flags.del) {
      throw std::invalid_argument("invalid alignment: deletion with delete disabled");
    }
    if (len > max_span) {
      throw std::invalid_argument("invalid alignment: span of " + std::to_string(len) +
                                  " exceeds " + std::to_string(max_span));
    }
  }
  for (TokenId tok : y) {
    if (Vocab::is_reserved(tok)) throw std::invalid_argument("invalid alignment: reserved token in Y");
  }
}

double sequence_score(const ScoringModel& model, const TokenSeq& x, const TokenSeq& y,
                      const std::vector<std::size_t>& t, StyleId style,
                      const DecodeFlags& flags) {
  validate_alignment(x, y, t, flags);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    DecoderState st;
    st.x = x;
    st.style = style;
    st.position = i;
    st.alignment.assign(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(i + 1));
    st.y.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t[i]));
    const std::size_t len = t[i + 1] - t[i];
    if (len == 0) {
      const Candidate c = score_candidate(model, st, Vocab::kPad);
      total += std::log(c.combined);
      continue;
    }
    for (std::size_t j = 0; j < len; ++j) {
      const TokenId tok = y[t[i] + j];
      const auto pred = predict_here(model, st);
      const double p = floored(pred.token_probs.at(tok));
      const double r = floored(recon_factor(model, st, tok));
      total += std::log(p * r);
      if (flags.insert && j < flags.max_insert) {
        const bool more = j + 1 < len;
        total += std::log(floored(pred.insert_probs[more ? kInsertContinue : kInsertStop]));
      }
      st.y.push_back(tok);
      st.run_length = j + 1;
    }
  }
  return total;
}

}  // namespace rlm
