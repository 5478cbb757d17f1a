#include "rlm/mi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rlm {

namespace {

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

void require_pairs(std::size_t u, const char* what) {
  if (u < 2) throw std::invalid_argument(what);
}

}  // namespace

QClassifier::QClassifier(std::size_t dim, std::size_t styles, std::uint64_t seed,
                         double init_std)
    : dim_(dim), styles_(styles) {
  if (dim == 0 || styles < 2) throw std::invalid_argument("Q needs dim >= 1 and >= 2 styles");
  params_.add("q.w", Tensor::matrix(dim, styles));
  params_.add("q.b", Tensor::matrix(1, styles));
  std::mt19937_64 rng(seed);
  fill_normal(params_.value("q.w"), init_std, rng);
}

QClassifier::QClassifier(std::size_t dim, std::size_t styles, ParameterSet params)
    : dim_(dim), styles_(styles), params_(std::move(params)) {
  if (params_.size() != 2 || !params_.contains("q.w") || !params_.contains("q.b") ||
      params_.value("q.w").shape() != std::vector<std::size_t>{dim, styles} ||
      params_.value("q.b").shape() != std::vector<std::size_t>{1, styles}) {
    throw std::invalid_argument("Q parameters do not match dim " + std::to_string(dim) +
                                " and " + std::to_string(styles) + " styles");
  }
}

Var QClassifier::log_probs(Binder& bind, Var contents) const {
  // Q trains only through q_objective, which binds it without detach.
  Graph& g = bind.graph();
  Var w = ad::detach(g, bind("q.w"));
  Var b = ad::detach(g, bind("q.b"));
  return ad::log_softmax(g, ad::linear(g, contents, w, b));
}

std::vector<double> QClassifier::log_probs(std::span<const double> c) const {
  if (c.size() != dim_) throw std::invalid_argument("content has wrong dimension for Q");
  const auto& w = params_.value("q.w");
  const auto& b = params_.value("q.b");
  std::vector<double> z(styles_);
  for (std::size_t s = 0; s < styles_; ++s) {
    double v = b[s];
    for (std::size_t i = 0; i < dim_; ++i) v += c[i] * w[i * styles_ + s];
    z[s] = v;
  }
  return log_softmax(z);
}

double l1_hat(const std::vector<std::vector<double>>& dists,
              const std::vector<TokenId>& targets) {
  if (dists.size() != targets.size() || dists.empty()) {
    throw std::invalid_argument("l1_hat needs one target per distribution");
  }
  double sum = 0.0;
  for (std::size_t u = 0; u < dists.size(); ++u) sum += safe_log(dists[u].at(targets[u]));
  return sum / static_cast<double>(dists.size());
}

double l1_hat(const RlmModel& model, const std::vector<MaskedSample>& batch) {
  std::vector<std::vector<double>> dists;
  std::vector<TokenId> targets;
  for (const auto& m : batch) {
    dists.push_back(model.predict(m.prefix, m.suffix, m.style).token_probs);
    targets.push_back(m.target);
  }
  return l1_hat(dists, targets);
}

double club_from_log_q(const std::vector<std::vector<double>>& log_q,
                       const std::vector<StyleId>& styles) {
  const std::size_t u = log_q.size();
  if (styles.size() != u) throw std::invalid_argument("CLUB needs one style per row");
  require_pairs(u, "CLUB needs \xe2\x89\xa5" "2 samples");
  // (1/U^2) sum_{u,v} [log Q(s_u|c_u) - log Q(s_v|c_u)], pairing (u,v) with
  // (v,u); diagonal terms vanish.
  double sum = 0.0;
  for (std::size_t a = 0; a < u; ++a) {
    for (std::size_t b = a + 1; b < u; ++b) {
      const double ab = log_q[a][styles[a]] - log_q[a][styles[b]];
      const double ba = log_q[b][styles[b]] - log_q[b][styles[a]];
      sum += ab + ba;
    }
  }
  return sum / static_cast<double>(u * u);
}

double l2_hat(const QClassifier& q, const std::vector<std::vector<double>>& contents,
              const std::vector<StyleId>& styles) {
  std::vector<std::vector<double>> log_q;
  for (const auto& c : contents) log_q.push_back(q.log_probs(c));
  return club_from_log_q(log_q, styles);
}

double l3_hat(const std::vector<std::vector<double>>& recon_dists,
              const std::vector<TokenId>& targets) {
  const std::size_t u = recon_dists.size();
  if (targets.size() != u) throw std::invalid_argument("l3_hat needs one target per row");
  require_pairs(u, "l3 needs at least 2 samples");
  double sum = 0.0;
  for (std::size_t a = 0; a < u; ++a) {
    for (std::size_t b = a + 1; b < u; ++b) {
      const double ab = safe_log(recon_dists[a].at(targets[a])) -
                        safe_log(recon_dists[a].at(targets[b]));
      const double ba = safe_log(recon_dists[b].at(targets[b])) -
                        safe_log(recon_dists[b].at(targets[a]));
      sum += ab + ba;
    }
  }
  return sum / static_cast<double>(u * u);
}

double recon_nll(const std::vector<std::vector<double>>& dists,
                 const std::vector<TokenId>& targets) {
  return -l1_hat(dists, targets);
}

double q_loss(const QClassifier& q, const std::vector<std::vector<double>>& contents,
              const std::vector<StyleId>& styles) {
  if (contents.size() != styles.size() || contents.empty()) {
    throw std::invalid_argument("q_loss needs one style per content row");
  }
  double sum = 0.0;
  for (std::size_t u = 0; u < contents.size(); ++u) sum += q.log_probs(contents[u])[styles[u]];
  return sum / static_cast<double>(contents.size());
}

double insert_loss(const std::vector<std::array<double, 2>>& probs,
                   const std::vector<TokenId>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw std::invalid_argument("insert_loss needs one label per decision");
  }
  double sum = 0.0;
  for (std::size_t u = 0; u < probs.size(); ++u) {
    if (labels[u] != Vocab::kMask && labels[u] != Vocab::kPad) {
      throw std::invalid_argument("insert label must be [MASK] or [PAD]");
    }
    sum -= safe_log(probs[u][labels[u] == Vocab::kMask ? kInsertContinue : kInsertStop]);
  }
  return sum / static_cast<double>(probs.size());
}

double ba_lower_surrogate(double mean_log_q, const std::vector<double>& prior) {
  double h = 0.0;
  for (double p : prior) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return mean_log_q + h;
}

LossBreakdown total_loss(double l1, double l2, double recon, double insert,
                         const LossWeights& w) {
  if (w.beta < 0.0 || w.w_r < 0.0 || w.w_ins < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  LossBreakdown b;
  b.l1 = l1;
  b.l2 = l2;
  b.l3_or_recon = recon;
  b.insert = insert;
  b.weights = w;
  b.total = -l1 + w.beta * l2 + w.w_r * recon + w.w_ins * insert;
  return b;
}

BatchContext BatchContext::from(const std::vector<TrainExample>& batch, std::size_t styles,
                                const LossWeights& w, const LossOptions& o) {
  BatchContext ctx;
  ctx.size = batch.size();
  ctx.style_counts.assign(styles, 0.0);
  ctx.weights = w;
  ctx.options = o;
  for (const auto& ex : batch) {
    ctx.style_counts.at(ex.masked.style) += 1.0;
    ctx.targets.push_back(ex.masked.target);
    ctx.predictions += 1 + (ex.deletion ? 1 : 0);
    ctx.gaps += (ex.gap ? 1 : 0) + (ex.deletion ? 1 : 0);
  }
  return ctx;
}

namespace {

// Recon candidates: the source token, then the top-K of the prediction under
// the other style (ordinary words and [PAD]), lowest id on ties.
std::vector<TokenId> recon_candidates(const std::vector<double>& probs, TokenId target,
                                      std::size_t k) {
  std::vector<TokenId> pool{Vocab::kPad};
  for (TokenId id = Vocab::kReservedCount; id < probs.size(); ++id) pool.push_back(id);
  const std::size_t keep = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    [&](TokenId a, TokenId b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  std::vector<TokenId> out{target};
  for (std::size_t i = 0; i < keep; ++i) {
    if (pool[i] != target) out.push_back(pool[i]);
  }
  return out;
}

}  // namespace

Var example_loss(Graph& g, Binder& bind, Binder& q_bind, const RlmModel& model,
                 const QClassifier& q, const TrainExample& ex, const BatchContext& ctx,
                 ExampleStats* stats) {
  if (ctx.size == 0) throw std::invalid_argument("empty batch");
  const double inv_u = 1.0 / static_cast<double>(ctx.size);
  const double inv_p = 1.0 / static_cast<double>(ctx.predictions);
  const auto& w = ctx.weights;
  const auto& m = ex.masked;
  std::vector<Var> terms;
  std::vector<double> coef;
  ExampleStats local;

  // Prediction of the masked token under the source style.
  const auto enc = model.encode(bind, m.prediction_input);
  Var e = model.fuse(bind, m.style, enc.contents, enc.mask_pos);
  Var lp = ad::log_softmax(g, model.prediction_logits(bind, e));
  terms.push_back(ad::pick(g, lp, 0, m.target));
  coef.push_back(-inv_p);
  local.log_pred.push_back(std::max(g.value(lp)[m.target], std::log(kProbFloor)));

  // CLUB: log Q(s_bar|c) - sum_s (n_s/U) log Q(s|c) per content row, Q frozen.
  if (w.beta > 0.0 || stats != nullptr) {
    const std::size_t rows = ctx.options.club_all_positions ? g.value(enc.contents).rows() : 1;
    Var c = ctx.options.club_all_positions ? enc.contents : ad::row(g, enc.contents, enc.mask_pos);
    Var lq = q.log_probs(q_bind, c);
    const double scale = w.beta * inv_u / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = g.value(lq).row_span(r);
      local.log_q.emplace_back(row.begin(), row.end());
      local.q_styles.push_back(m.style);
      if (w.beta == 0.0) continue;
      for (std::size_t s = 0; s < q.styles(); ++s) {
        const double k = (s == m.style ? 1.0 : 0.0) - ctx.style_counts[s] * inv_u;
        if (k == 0.0) continue;
        terms.push_back(ad::pick(g, lq, r, s));
        coef.push_back(scale * k);
      }
    }
  }

  // Reconstruction of x_i from each candidate span.
  if (ctx.options.recon == ReconMode::kNll) {
    Var e_other = model.fuse(bind, ex.other_style, ad::detach(g, enc.contents), enc.mask_pos);
    const auto other = softmax(g.value(model.prediction_logits(bind, e_other)).data());
    const auto cands = recon_candidates(other, m.target, ctx.options.topk);
    const double scale = w.w_r * inv_u / static_cast<double>(cands.size());
    for (TokenId y : cands) {
      Var cp;
      if (y == Vocab::kPad) {
        cp = ad::row(g, enc.contents, enc.mask_pos);
      } else {
        const TokenSeq span{y};
        const auto renc =
            model.encode(bind, assemble_reconstruction_input(span, m.prefix, m.suffix));
        cp = ad::row(g, renc.contents, renc.mask_pos);
      }
      Var lr = ad::log_softmax(g, model.reconstruction_logits(bind, cp));
      terms.push_back(ad::pick(g, lr, 0, m.target));
      coef.push_back(-scale);
      local.recon_terms.push_back(-std::max(g.value(lr)[m.target], std::log(kProbFloor)));
    }
  } else {
    const auto renc = model.encode(bind, m.reconstruction_input);
    Var lr = ad::log_softmax(
        g, model.reconstruction_logits(bind, ad::row(g, renc.contents, renc.mask_pos)));
    // Enters the total as -w_r * l3.
    for (std::size_t v = 0; v < ctx.targets.size(); ++v) {
      local.l3_row.push_back(std::max(g.value(lr)[ctx.targets[v]], std::log(kProbFloor)));
    }
    terms.push_back(ad::pick(g, lr, 0, m.target));
    coef.push_back(-w.w_r * inv_u);
    for (TokenId t : ctx.targets) {
      terms.push_back(ad::pick(g, lr, 0, t));
      coef.push_back(w.w_r * inv_u * inv_u);
    }
  }

  if (ex.gap) {
    const auto genc = model.encode(bind, ex.gap->input);
    Var ge = model.fuse(bind, ex.gap->style, genc.contents, genc.mask_pos);
    Var li = ad::log_softmax(g, model.insertion_logits(bind, ge));
    const std::size_t label = ex.gap->label == Vocab::kMask ? kInsertContinue : kInsertStop;
    terms.push_back(ad::pick(g, li, 0, label));
    coef.push_back(-w.w_ins / static_cast<double>(ctx.gaps));
    local.insert_terms.push_back(-std::max(g.value(li)[label], std::log(kProbFloor)));
  }

  if (ex.deletion) {
    const auto denc =
        model.encode(bind, assemble_prediction_input(ex.deletion->prefix, ex.deletion->suffix));
    Var de = model.fuse(bind, ex.deletion->style, denc.contents, denc.mask_pos);
    Var dl = ad::log_softmax(g, model.prediction_logits(bind, de));
    terms.push_back(ad::pick(g, dl, 0, Vocab::kPad));
    coef.push_back(-inv_p);
    local.log_pred.push_back(std::max(g.value(dl)[Vocab::kPad], std::log(kProbFloor)));
    // Nothing is missing here either, so the insert head should stop.
    Var ds = ad::log_softmax(g, model.insertion_logits(bind, de));
    terms.push_back(ad::pick(g, ds, 0, kInsertStop));
    coef.push_back(-w.w_ins / static_cast<double>(ctx.gaps));
    local.insert_terms.push_back(-std::max(g.value(ds)[kInsertStop], std::log(kProbFloor)));
  }

  if (stats != nullptr) *stats = std::move(local);
  return ad::weighted_sum(g, terms, coef);
}

LossBreakdown summarize(const std::vector<ExampleStats>& stats, const BatchContext& ctx) {
  double l1 = 0.0;
  std::size_t preds = 0;
  for (const auto& s : stats) {
    for (double v : s.log_pred) {
      l1 += v;
      ++preds;
    }
  }
  l1 = preds ? l1 / static_cast<double>(preds) : 0.0;

  double l2 = 0.0;
  const bool single_row = std::all_of(stats.begin(), stats.end(),
                                      [](const ExampleStats& s) { return s.log_q.size() == 1; });
  if (single_row && stats.size() >= 2) {
    std::vector<std::vector<double>> rows;
    std::vector<StyleId> styles;
    for (const auto& s : stats) {
      rows.push_back(s.log_q[0]);
      styles.push_back(s.q_styles[0]);
    }
    l2 = club_from_log_q(rows, styles);
  } else if (!single_row) {
    const double inv_u = 1.0 / static_cast<double>(ctx.size);
    for (const auto& s : stats) {
      double per = 0.0;
      for (std::size_t r = 0; r < s.log_q.size(); ++r) {
        double v = s.log_q[r][s.q_styles[r]];
        for (std::size_t k = 0; k < s.log_q[r].size(); ++k) {
          v -= ctx.style_counts[k] * inv_u * s.log_q[r][k];
        }
        per += v;
      }
      l2 += per / static_cast<double>(s.log_q.size()) * inv_u;
    }
  }

  double recon = 0.0;
  if (ctx.options.recon == ReconMode::kNll) {
    for (const auto& s : stats) {
      if (s.recon_terms.empty()) continue;
      recon += std::accumulate(s.recon_terms.begin(), s.recon_terms.end(), 0.0) /
               static_cast<double>(s.recon_terms.size());
    }
    recon /= static_cast<double>(std::max<std::size_t>(1, stats.size()));
  } else {
    double l3 = 0.0;
    const double inv_u = 1.0 / static_cast<double>(ctx.size);
    for (std::size_t u = 0; u < stats.size(); ++u) {
      const auto& row = stats[u].l3_row;
      double all = 0.0;
      for (double v : row) all += v;
      l3 += (row[u] - all * inv_u) * inv_u;
    }
    recon = -l3;
  }

  double ins = 0.0;
  std::size_t gaps = 0;
  for (const auto& s : stats) {
    for (double v : s.insert_terms) {
      ins += v;
      ++gaps;
    }
  }
  ins = gaps ? ins / static_cast<double>(gaps) : 0.0;
  return total_loss(l1, l2, recon, ins, ctx.weights);
}

Var batch_loss(Graph& g, Binder& bind, Binder& q_bind, const RlmModel& model,
               const QClassifier& q, const std::vector<TrainExample>& batch,
               const BatchContext& ctx) {
  std::vector<Var> parts;
  for (const auto& ex : batch) parts.push_back(example_loss(g, bind, q_bind, model, q, ex, ctx, nullptr));
  return ad::weighted_sum(g, parts, std::vector<double>(parts.size(), 1.0));
}

Var q_objective(Graph& g, Binder& q_bind, const QClassifier& q,
                const std::vector<std::vector<double>>& contents,
                const std::vector<StyleId>& styles) {
  if (contents.size() != styles.size() || contents.empty()) {
    throw std::invalid_argument("q objective needs one style per content row");
  }
  Tensor c = Tensor::matrix(contents.size(), q.dim());
  for (std::size_t r = 0; r < contents.size(); ++r) {
    if (contents[r].size() != q.dim()) throw std::invalid_argument("content has wrong dimension for Q");
    std::copy(contents[r].begin(), contents[r].end(), c.row_span(r).begin());
  }
  Var lq = ad::log_softmax(g, ad::linear(g, g.constant(std::move(c)), q_bind("q.w"), q_bind("q.b")));
  std::vector<Var> picks;
  for (std::size_t r = 0; r < styles.size(); ++r) picks.push_back(ad::pick(g, lq, r, styles[r]));
  const double k = -1.0 / static_cast<double>(styles.size());
  return ad::weighted_sum(g, picks, std::vector<double>(picks.size(), k));
}

}  // namespace rlm
