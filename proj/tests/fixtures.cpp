#include "fixtures.hpp"

#include <cmath>

namespace fixtures {

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.ff_dim = 16;
  c.max_len = 16;
  c.vocab_size = 16;
  c.init_std = 0.3;
  c.style_init_std = 0.5;
  return c;
}

MaskedSample masked(const TokenSeq& sentence, std::size_t pos, StyleId style) {
  MaskedSample m;
  m.prefix.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(pos));
  m.suffix.assign(sentence.begin() + static_cast<std::ptrdiff_t>(pos) + 1, sentence.end());
  m.target = sentence[pos];
  m.style = style;
  m.position = pos;
  m.prediction_input = assemble_prediction_input(m.prefix, m.suffix);
  m.reconstruction_input = assemble_reconstruction_input(TokenSeq{m.target}, m.prefix, m.suffix);
  return m;
}

std::vector<TrainExample> tiny_batch() {
  std::vector<TrainExample> b(3);
  b[0].masked = masked({4, 7, 9, 5}, 1, 0);
  b[0].other_style = 1;
  GapSample gap;
  gap.prefix = {4};
  gap.suffix = {5};
  gap.width = 2;
  gap.label = gap_label(2);
  gap.input = assemble_prediction_input(gap.prefix, gap.suffix);
  b[0].gap = gap;
  b[1].masked = masked({6, 8, 10}, 2, 1);
  b[1].other_style = 0;
  b[1].deletion = DeletionSample{{6}, {8, 10}, 1};
  b[2].masked = masked({11, 12, 13, 14, 15}, 0, 0);
  b[2].other_style = 1;
  GapSample g1;
  g1.prefix = {11, 12};
  g1.suffix = {14, 15};
  g1.width = 1;
  g1.label = gap_label(1);
  g1.input = assemble_prediction_input(g1.prefix, g1.suffix);
  b[2].gap = g1;
  return b;
}

QClassifier content_blind_q(std::size_t dim, std::vector<double> bias) {
  QClassifier q(dim, bias.size(), 1);
  for (double& v : q.params().value("q.w").storage()) v = 0.0;
  q.params().value("q.b").storage() = std::move(bias);
  return q;
}

QClassifier tabular_q(const std::vector<std::vector<double>>& cond) {
  QClassifier q(cond.size(), cond[0].size(), 1);
  auto& w = q.params().value("q.w");
  for (std::size_t c = 0; c < cond.size(); ++c) {
    for (std::size_t s = 0; s < cond[c].size(); ++s) w.at(c, s) = std::log(cond[c][s]);
  }
  for (double& v : q.params().value("q.b").storage()) v = 0.0;
  return q;
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1 - p) * std::log(1 - p);
}

double flip_rate_for(double m) {
  double lo = 0.0, hi = 0.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::log(2.0) - binary_entropy(mid) > m) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

Draws draw_joint(double eps, std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5), flip(eps);
  Draws d;
  for (std::size_t i = 0; i < n; ++i) {
    const StyleId s = coin(rng) ? 1 : 0;
    const std::size_t c = flip(rng) ? 1 - s : s;
    d.styles.push_back(s);
    d.c.push_back(c);
    d.contents.push_back(c == 0 ? std::vector<double>{1, 0} : std::vector<double>{0, 1});
  }
  return d;
}

std::vector<std::vector<double>> fit_conditional(const Draws& d) {
  std::vector<std::vector<double>> n(2, std::vector<double>(2, 1.0));
  for (std::size_t i = 0; i < d.c.size(); ++i) n[d.c[i]][d.styles[i]] += 1.0;
  for (auto& row : n) {
    const double t = row[0] + row[1];
    for (double& v : row) v /= t;
  }
  return n;
}

std::vector<double> row(double pad, double a, double b) { return {pad, 0, 0, 0, a, b}; }

PredictionOutput pred(double pad, double a, double b, double cont) {
  return {row(pad, a, b), {cont, 1.0 - cont}};
}

std::vector<double> recon_of_a(double pa) { return row(0.0, pa, 1.0 - pa); }

StubModel two_word_stub(double first_continue) {
  StubModel m(6);
  m.set_prediction({}, {}, 1, pred(0.3, 0.2, 0.5, first_continue));
  m.set_reconstruction({}, {}, {}, recon_of_a(0.9));
  m.set_reconstruction(TokenSeq{A}, {}, {}, recon_of_a(0.6));
  m.set_reconstruction(TokenSeq{B}, {}, {}, recon_of_a(0.3));
  return m;
}

MiStudyResult mi_study(double target, std::size_t seeds) {
  const double ln2 = std::log(2.0);
  const double eps = target == 0.0 ? 0.5 : (target == ln2 ? 0.0 : flip_rate_for(target));
  MiStudyResult r;
  r.mi = ln2 - binary_entropy(eps);
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    std::mt19937_64 rng(seed);
    const auto fit = draw_joint(eps, 2000, rng);
    const auto q = tabular_q(fit_conditional(fit));
    const auto batch = draw_joint(eps, 256, rng);
    r.club += l2_hat(q, batch.contents, batch.styles) / double(seeds);
    r.ba += ba_lower_surrogate(q_loss(q, batch.contents, batch.styles), {0.5, 0.5}) /
            double(seeds);
  }
  return r;
}

double l3_study(double target, std::size_t seeds) {
  const double eps = flip_rate_for(target);
  double l3 = 0;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto fit = draw_joint(eps, 2000, rng);
    const auto cond = fit_conditional(fit);
    const auto batch = draw_joint(eps, 256, rng);
    std::vector<std::vector<double>> dists;
    std::vector<TokenId> targets;
    for (std::size_t i = 0; i < batch.c.size(); ++i) {
      dists.push_back(cond[batch.c[i]]);
      targets.push_back(batch.styles[i]);
    }
    l3 += l3_hat(dists, targets) / double(seeds);
  }
  return l3;
}

const std::vector<PublishedRow>& published_gm_rows() {
  static const std::vector<PublishedRow> rows = {
      {"yelp CrossAlign", 74.2, 4.2, 13.2, 16.0},  {"yelp DRG", 88.3, 23.1, 44.4, 44.9},
      {"yelp S-Transformer", 87.3, 19.8, 55.2, 45.7}, {"yelp CPVAE", 55.4, 26.4, 48.4, 41.4},
      {"yelp RACoLN", 91.3, 20.0, 59.4, 47.7},     {"yelp RLM", 91.0, 30.6, 51.7, 52.4},
      {"amazon CrossAlign", 65.0, 9.2, 20.7, 23.1}, {"amazon S-Transformer", 58.3, 27.7, 57.3, 45.2},
      {"amazon CPVAE", 40.0, 28.6, 39.7, 35.7},    {"amazon RACoLN", 48.7, 36.1, 54.5, 45.7},
      {"amazon RLM", 57.5, 30.9, 54.7, 46.0},      {"ablation top-1", 89.7, 30.0, 53.5, 52.4},
      {"ablation top-3", 90.7, 29.5, 51.8, 51.8},  {"ablation top-5", 91.0, 30.6, 51.7, 52.4},
      {"ablation top-10", 91.0, 29.5, 51.5, 51.7}, {"ablation no MI", 74.6, 27.7, 38.2, 42.9},
      {"ablation no insert", 89.6, 31.0, 50.1, 51.8}, {"ablation no delete", 85.1, 29.7, 49.9, 50.1},
      {"ablation no delete+insert", 88.7, 29.1, 53.3, 51.6},
  };
  return rows;
}

}  // namespace fixtures
