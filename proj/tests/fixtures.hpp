#pragma once
// Small models, batches and synthetic joints shared by the unit tests and the
// acceptance runner.

#include <random>
#include <vector>

#include "rlm/mi.hpp"
#include "rlm/scoring.hpp"

namespace fixtures {

using namespace rlm;

/// d=8, one layer, 16 ids.
ModelConfig tiny_config();

MaskedSample masked(const TokenSeq& sentence, std::size_t pos, StyleId style);

/// Three examples covering a width-2 gap, a deletion and a width-1 gap.
std::vector<TrainExample> tiny_batch();

inline constexpr TokenId A = 4;
inline constexpr TokenId B = 5;

/// Distribution over the six ids of the two-word stub.
std::vector<double> row(double pad, double a, double b);
PredictionOutput pred(double pad, double a, double b, double cont = 0.5);
std::vector<double> recon_of_a(double pa);

/// V = 2 stub for X = [a]: prediction {PAD .3, a .2, b .5}; reconstruction of
/// x = a from span [] .9, [a] .6, [b] .3. Products: PAD .27, a .12, b .15.
StubModel two_word_stub(double first_continue = 0.2);

QClassifier content_blind_q(std::size_t dim, std::vector<double> bias);

/// Q over one-hot contents whose weights are log q(s | c).
QClassifier tabular_q(const std::vector<std::vector<double>>& cond);

double binary_entropy(double p);

/// Flip rate giving I(s; c) = m for uniform binary s and c = s flipped w.p. eps.
double flip_rate_for(double m);

struct Draws {
  std::vector<std::vector<double>> contents;  // one-hot c
  std::vector<StyleId> styles;
  std::vector<std::size_t> c;
};

Draws draw_joint(double eps, std::size_t n, std::mt19937_64& rng);

/// q(s | c) from counts with add-one smoothing.
std::vector<std::vector<double>> fit_conditional(const Draws& d);

struct MiStudyResult {
  double mi = 0.0;    // analytic I(s; c)
  double club = 0.0;  // mean L2 estimate
  double ba = 0.0;    // mean BA lower surrogate
};

/// Fits a tabular Q on 2000 draws and estimates on a batch of 256, averaged
/// over seeds 1..`seeds`. `target` must be 0, ln 2 or in between.
MiStudyResult mi_study(double target, std::size_t seeds = 30);

/// Mean L3 over seeds with x in place of s and P(x | c) fitted by counts.
double l3_study(double target, std::size_t seeds = 30);

/// Automatic-evaluation rows of the published result tables: accuracy,
/// reference BLEU, self BLEU and the printed geometric mean.
struct PublishedRow {
  const char* name;
  double acc, r_bleu, s_bleu, gm;
};
const std::vector<PublishedRow>& published_gm_rows();

}  // namespace fixtures
