#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "rlm/decoder.hpp"
#include "rlm/model.hpp"
#include "rlm/oracle.hpp"

using namespace rlm;
using namespace fixtures;

namespace {

std::shared_ptr<const ScoringModel> tiny(std::uint64_t seed, std::size_t words = 8) {
  std::mt19937_64 rng(seed);
  return random_tiny_models(words)(rng);
}

TokenSeq random_source(std::mt19937_64& rng, std::size_t words, std::size_t n) {
  std::uniform_int_distribution<TokenId> w(4, static_cast<TokenId>(3 + words));
  TokenSeq x(n);
  for (auto& t : x) t = w(rng);
  return x;
}

}  // namespace

TEST(Decoder, StubDeletionPathMatchesHandTable) {
  const auto m = two_word_stub();
  DecodeFlags flags{true, true, 4};
  auto pool = topk_candidates(m, start_state({A}, 1), 3, flags);
  ASSERT_EQ(pool.size(), 3u);
  EXPECT_EQ(pool[0].token, Vocab::kPad);
  EXPECT_NEAR(pool[0].combined, 0.27, 1e-15);
  EXPECT_EQ(pool[1].token, B);
  EXPECT_NEAR(pool[1].combined, 0.15, 1e-15);
  EXPECT_EQ(pool[2].token, A);
  EXPECT_NEAR(pool[2].combined, 0.12, 1e-15);

  auto r = transfer(m, {A}, 1, 3, flags);
  EXPECT_TRUE(r.y.empty());
  EXPECT_EQ(r.alignment, (std::vector<std::size_t>{0, 0}));
  EXPECT_NEAR(r.log_score, std::log(0.27), 1e-15);
  EXPECT_FALSE(r.trace[0].insert_consulted);
}

TEST(Decoder, StubWithoutDeleteTakesBestToken) {
  const auto m = two_word_stub();
  auto r = transfer(m, {A}, 1, 3, DecodeFlags{false, false, 4});
  EXPECT_EQ(r.y, TokenSeq{B});
  EXPECT_NEAR(r.log_score, std::log(0.15), 1e-15);
}

TEST(Decoder, StubInsertionRunMatchesHandTable) {
  // Step 1 picks b (.15) and continues with factor .8. Step 2 context [b]:
  // prediction {a .7, b .3}, reconstruction from [b a] .5 and [b b] .1, so a
  // (.35) wins and the run stops with factor .6.
  auto m = two_word_stub(0.8);
  m.set_prediction(TokenSeq{B}, {}, 1, pred(0.0, 0.7, 0.3, 0.4));
  m.set_reconstruction(TokenSeq{B, A}, {}, {}, recon_of_a(0.5));
  m.set_reconstruction(TokenSeq{B, B}, {}, {}, recon_of_a(0.1));
  DecodeFlags flags{true, false, 4};
  auto r = transfer(m, {A}, 1, 3, flags);
  EXPECT_EQ(r.y, (TokenSeq{B, A}));
  EXPECT_EQ(r.alignment, (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_NEAR(r.trace[0].score, 0.15 * 0.8, 1e-15);
  EXPECT_TRUE(r.trace[0].insert_continue);
  EXPECT_NEAR(r.trace[1].chosen.combined, 0.35, 1e-15);
  EXPECT_NEAR(r.trace[1].score, 0.35 * 0.6, 1e-15);
  EXPECT_NEAR(r.log_score, std::log(0.15 * 0.8) + std::log(0.35 * 0.6), 1e-12);
  EXPECT_NEAR(sequence_score(m, {A}, r.y, r.alignment, 1, flags), r.log_score, 1e-12);
}

TEST(Decoder, PadNeverCompetesInsideARun) {
  auto m = two_word_stub(0.8);
  m.set_prediction(TokenSeq{B}, {}, 1, pred(0.9, 0.05, 0.05, 0.1));
  auto r = transfer(m, {A}, 1, 3, DecodeFlags{true, true, 4});
  // First step deletes (PAD .27 beats b), so no run starts at all.
  EXPECT_TRUE(r.y.empty());
  auto r2 = transfer(m, {A}, 1, 3, DecodeFlags{true, false, 4});
  ASSERT_EQ(r2.y.size(), 2u);
  for (const auto& c : r2.trace[1].pool) EXPECT_NE(c.token, Vocab::kPad);
}

TEST(Decoder, EqualLengthSingleStep) {
  const auto m = two_word_stub();
  auto st = decode_step(m, start_state({A}, 1), 3, DecodeFlags{false, false, 4});
  EXPECT_TRUE(st.done());
  EXPECT_EQ(st.y.size(), 1u);
  try {
    decode_step(m, st, 3, DecodeFlags{false, false, 4});
    FAIL();
  } catch (const std::logic_error& e) {
    EXPECT_STREQ(e.what(), "decode complete");
  }
}

TEST(Decoder, ForcedPadModelDeletesEverything) {
  StubModel m(6);
  m.set_default_prediction({row(1.0, 0.0, 0.0), {0.5, 0.5}});
  auto r = transfer(m, {A, B, A}, 0, 3, DecodeFlags{true, true, 4});
  EXPECT_TRUE(r.y.empty());
  EXPECT_EQ(r.alignment, (std::vector<std::size_t>{0, 0, 0, 0}));
}

TEST(Decoder, ForcedInsertRunStopsAtCap) {
  StubModel m(6);
  m.set_default_prediction({row(0.0, 0.6, 0.4), {0.99, 0.01}});
  for (std::size_t cap : {0u, 1u, 2u, 4u}) {
    auto r = transfer(m, {A, B}, 0, 3, DecodeFlags{true, true, cap});
    EXPECT_EQ(r.alignment, (std::vector<std::size_t>{0, cap + 1, 2 * cap + 2}));
    validate_alignment({A, B}, r.y, r.alignment, DecodeFlags{true, true, cap});
    // The token after the cap is not consulted.
    EXPECT_FALSE(r.trace[cap].insert_consulted);
  }
}

TEST(Decoder, IdentityModelReproducesSource) {
  const TokenSeq x{A, B, B};
  StubModel m(6);
  TokenSeq prefix;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const TokenSeq suffix(x.begin() + static_cast<long>(i) + 1, x.end());
    m.set_prediction(prefix, suffix, 0,
                     {x[i] == A ? row(0.1, 0.8, 0.1) : row(0.1, 0.1, 0.8), {0.1, 0.9}});
    const TokenSeq xp(x.begin(), x.begin() + static_cast<long>(i));
    for (TokenId y : {A, B}) {
      m.set_reconstruction(TokenSeq{y}, xp, suffix,
                           y == x[i] ? recon_of_a(x[i] == A ? 1.0 : 0.0)
                                     : recon_of_a(x[i] == A ? 0.0 : 1.0));
    }
    m.set_reconstruction({}, xp, suffix, recon_of_a(x[i] == A ? 0.0 : 1.0));
    prefix.push_back(x[i]);
  }
  EXPECT_EQ(transfer(m, x, 0, 3, DecodeFlags{true, true, 4}).y, x);
}

TEST(Decoder, TopKOneIsPredictionArgmax) {
  const auto m = two_word_stub();
  auto pool = topk_candidates(m, start_state({A}, 1), 1, DecodeFlags{true, true, 4});
  ASSERT_EQ(pool.size(), 1u);
  EXPECT_EQ(pool[0].token, B);
}

TEST(Decoder, FullKPoolCoversVocabularyAndPad) {
  const auto m = tiny(3);
  auto pool = topk_candidates(*m, start_state({5, 6}, 0), 9, DecodeFlags{true, true, 4});
  EXPECT_EQ(pool.size(), 9u);
  std::set<TokenId> ids;
  for (const auto& c : pool) ids.insert(c.token);
  EXPECT_TRUE(ids.contains(Vocab::kPad));
  for (TokenId t = 4; t < 12; ++t) EXPECT_TRUE(ids.contains(t));
  for (std::size_t i = 1; i < pool.size(); ++i) EXPECT_GE(pool[i - 1].combined, pool[i].combined);
}

TEST(DecoderProperties, EqualLengthModeKeepsLength) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = tiny(100 + trial);
    const auto x = random_source(rng, 8, 1 + trial % 6);
    auto r = transfer(*m, x, trial % 2, 3, DecodeFlags{false, false, 4});
    ASSERT_EQ(r.y.size(), x.size());
    for (std::size_t i = 0; i <= x.size(); ++i) EXPECT_EQ(r.alignment[i], i);
  }
}

TEST(DecoderProperties, AlignmentsAreValid) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = tiny(200 + trial);
    const auto x = random_source(rng, 8, 1 + trial % 5);
    DecodeFlags flags{true, true, static_cast<std::size_t>(1 + trial % 3)};
    auto r = transfer(*m, x, trial % 2, 4, flags);
    EXPECT_NO_THROW(validate_alignment(x, r.y, r.alignment, flags));
    EXPECT_EQ(r.alignment.front(), 0u);
    EXPECT_EQ(r.alignment.back(), r.y.size());
  }
}

TEST(DecoderProperties, SequenceScoreMatchesDecoder) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = tiny(300 + trial);
    const auto x = random_source(rng, 8, 1 + trial % 4);
    DecodeFlags flags{trial % 2 == 0, trial % 3 != 0, 2};
    auto r = transfer(*m, x, trial % 2, 5, flags);
    double product = 1.0;
    for (const auto& s : r.trace) product *= s.score;
    EXPECT_NEAR(std::exp(r.log_score), product, 1e-9 * product);
    const double again = sequence_score(*m, x, r.y, r.alignment, trial % 2, flags);
    EXPECT_LE(std::abs(again - r.log_score) / std::max(1.0, std::abs(r.log_score)), 1e-9);
  }
}

TEST(DecoderProperties, DeletionOnlyScoreIsSumOfPadAndReconFactors) {
  StubModel m(6);
  m.set_default_prediction({row(0.7, 0.2, 0.1), {0.5, 0.5}});
  m.set_default_reconstruction(recon_of_a(0.4));
  const TokenSeq x{A, B};
  const double s = sequence_score(m, x, {}, {0, 0, 0}, 0, DecodeFlags{true, true, 4});
  EXPECT_NEAR(s, std::log(0.7) + std::log(0.4) + std::log(0.7) + std::log(0.6), 1e-12);
}

TEST(DecoderProperties, LargerKNeverLowersChosenScore) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = tiny(400 + trial);
    const auto x = random_source(rng, 8, 3);
    auto st = start_state(x, trial % 2);
    DecodeFlags flags{true, true, 2};
    double prev = 0.0;
    for (std::size_t k = 1; k <= 9; ++k) {
      const double best = topk_candidates(*m, st, k, flags).front().combined;
      EXPECT_GE(best, prev);
      prev = best;
    }
  }
}

TEST(DecoderProperties, TransferIsDeterministic) {
  const auto m = tiny(7);
  const TokenSeq x{5, 9, 6, 11};
  auto a = transfer(*m, x, 1, 4, DecodeFlags{});
  auto b = transfer(*m, x, 1, 4, DecodeFlags{});
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.alignment, b.alignment);
  EXPECT_EQ(a.log_score, b.log_score);
}

TEST(DecoderProperties, InvalidAlignmentRejected) {
  const auto m = two_word_stub();
  EXPECT_THROW(sequence_score(m, {A}, {B}, {0, 0}, 1, DecodeFlags{}), std::invalid_argument);
  EXPECT_THROW(sequence_score(m, {A}, {}, {0, 0}, 1, DecodeFlags{true, false, 4}),
               std::invalid_argument);
  EXPECT_THROW(sequence_score(m, {A}, {A, A}, {0, 2}, 1, DecodeFlags{false, true, 4}),
               std::invalid_argument);
  EXPECT_THROW(sequence_score(m, {A, B}, {A, A}, {0, 2, 1}, 1, DecodeFlags{}),
               std::invalid_argument);
}

TEST(Oracle, StubArgmaxMatchesHandTable) {
  const auto m = two_word_stub();
  auto c = exhaustive_step_argmax(m, OracleQuery{{A}, {}, 0, 0, 1, true});
  EXPECT_EQ(c.token, Vocab::kPad);
  EXPECT_NEAR(c.score, 0.27, 1e-15);
  auto no_pad = exhaustive_step_argmax(m, OracleQuery{{A}, {}, 0, 0, 1, false});
  EXPECT_EQ(no_pad.token, B);
  EXPECT_NEAR(no_pad.score, 0.15, 1e-15);
}

TEST(Oracle, UniformModelTieBreaksToLowestId) {
  StubModel m(6);
  EXPECT_EQ(exhaustive_step_argmax(m, OracleQuery{{A}, {}, 0, 0, 0, true}).token, Vocab::kPad);
  EXPECT_EQ(exhaustive_step_argmax(m, OracleQuery{{A}, {}, 0, 0, 0, false}).token, A);
  EXPECT_EQ(transfer(m, {A}, 0, 3, DecodeFlags{}).trace[0].chosen.token, Vocab::kPad);
}

TEST(Oracle, RefusesLargeVocab) {
  StubModel m(Vocab::kReservedCount + kOracleMaxWords + 1);
  EXPECT_THROW(exhaustive_step_argmax(m, OracleQuery{{A}, {}, 0, 0, 0, true}),
               std::invalid_argument);
}

TEST(Oracle, IndependentScoreSimpleCases) {
  StubModel ones(6);
  ones.set_default_prediction({row(0.0, 1.0, 0.0), {0.0, 1.0}});
  ones.set_default_reconstruction(recon_of_a(1.0));
  EXPECT_EQ(independent_score(ones, {A, A}, {A, A}, {0, 1, 2}, 0, true, 4), 0.0);
  const auto m = two_word_stub();
  EXPECT_NEAR(independent_score(m, {A}, {B}, {0, 1}, 1, false, 4), std::log(0.5 * 0.3), 1e-15);
}

TEST(Oracle, RandomInstancesAgree) {
  OracleCheckConfig cfg;
  cfg.instances = 40;
  cfg.seed = 5;
  auto report = run_oracle_check(cfg, random_tiny_models(10));
  EXPECT_EQ(report.agreements, report.instances) << report.worst_instance;
  EXPECT_LT(report.max_score_divergence, 1e-9);
}
