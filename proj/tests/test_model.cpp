#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "reference.hpp"
#include "rlm/grad_check.hpp"
#include "rlm/model.hpp"

using namespace rlm;

namespace {

ModelConfig tiny_config(std::size_t words = 12) {
  ModelConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.ff_dim = 16;
  c.max_len = 16;
  c.vocab_size = words + Vocab::kReservedCount;
  c.init_std = 0.3;
  c.style_init_std = 0.3;
  return c;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void zero(RlmModel& m, const char* head) {
  for (const char* part : {".w", ".b"}) {
    for (double& v : m.params().value(std::string(head) + part).storage()) v = 0.0;
  }
}

const TokenSeq kPrefix{5, 9};
const TokenSeq kSuffix{7, 4, 12};

}  // namespace

TEST(Model, ContentEmbeddingHasDimD) {
  RlmModel m(tiny_config(), 1);
  EXPECT_EQ(m.encode_content(kPrefix, kSuffix).values.size(), 8u);
  EXPECT_EQ(m.encode_reconstruction(TokenSeq{6}, kPrefix, kSuffix).values.size(), 8u);
}

TEST(Model, EncodingIsDeterministic) {
  RlmModel m(tiny_config(), 1);
  EXPECT_EQ(m.encode_content(kPrefix, kSuffix).values, m.encode_content(kPrefix, kSuffix).values);
  RlmModel again(tiny_config(), 1);
  EXPECT_EQ(m.encode_content(kPrefix, kSuffix).values,
            again.encode_content(kPrefix, kSuffix).values);
}

TEST(Model, EncodeContentMatchesReference) {
  RlmModel m(tiny_config(), 3);
  const auto ids = assemble_prediction_input(kPrefix, kSuffix);
  const auto want = ref::encode(m, ids)[ref::mask_index(ids)];
  expect_close(m.encode_content(kPrefix, kSuffix).values, want, 1e-12);
}

TEST(Model, EncodeReconstructionMatchesReference) {
  RlmModel m(tiny_config(), 4);
  const TokenSeq span{8, 10};
  const auto ids = assemble_reconstruction_input(span, kPrefix, kSuffix);
  const auto want = ref::encode(m, ids)[ref::mask_index(ids)];
  expect_close(m.encode_reconstruction(span, kPrefix, kSuffix).values, want, 1e-12);
}

TEST(Model, EmptySpanEqualsPlainEncodingBitExactly) {
  RlmModel m(tiny_config(), 5);
  EXPECT_EQ(m.encode_reconstruction({}, kPrefix, kSuffix).values,
            m.encode_content(kPrefix, kSuffix).values);
}

TEST(Model, FuseThreePositionsMatchesReference) {
  RlmModel m(tiny_config(), 6);
  const TokenSeq pre{}, suf{};
  std::size_t mask = 0;
  auto contents = m.encode_content_sequence(pre, suf, &mask);
  ASSERT_EQ(contents.size(), 3u);
  ref::Mat c;
  for (const auto& e : contents) c.push_back(e.values);
  for (StyleId s : {0u, 1u}) {
    for (std::size_t i = 0; i < 3; ++i) {
      expect_close(m.fuse(s, contents, i).values, ref::fuse(m, s, c, i), 1e-12);
    }
  }
}

TEST(Model, FuseSinglePositionAttentionIsItsValueRow) {
  RlmModel m(tiny_config(), 7);
  ContentEmbedding c{std::vector<double>{0.1, -0.4, 0.3, 0.9, -1.1, 0.2, 0.0, 0.5}, 0};
  // With L = 1 the attention output equals the value projection of z, so the
  // fused vector is LN(c + Wv z + bv).
  const auto& st = m.params().value("style");
  std::vector<double> cat(16);
  for (std::size_t j = 0; j < 8; ++j) {
    cat[j] = st[j];
    cat[8 + j] = c.values[j];
  }
  const auto& pw = m.params().value("fuse.proj.w");
  const auto& pb = m.params().value("fuse.proj.b");
  std::vector<double> zr(8);
  for (std::size_t j = 0; j < 8; ++j) {
    zr[j] = pb[j];
    for (std::size_t i = 0; i < 16; ++i) zr[j] += cat[i] * pw[i * 8 + j];
  }
  const auto& vw = m.params().value("fuse.attn.v.w");
  const auto& vb = m.params().value("fuse.attn.v.b");
  std::vector<double> pre(8);
  for (std::size_t j = 0; j < 8; ++j) {
    double v = vb[j];
    for (std::size_t i = 0; i < 8; ++i) v += zr[i] * vw[i * 8 + j];
    pre[j] = c.values[j] + v;
  }
  const auto want = layer_norm(pre, m.params().value("fuse.ln.g").data(),
                               m.params().value("fuse.ln.b").data(), m.config().ln_eps);
  expect_close(m.fuse(0, {c}, 0).values, want, 1e-12);
}

TEST(Model, FuseRejectsEmptyContents) {
  RlmModel m(tiny_config(), 7);
  EXPECT_THROW(m.fuse(0, {}, 0), std::invalid_argument);
}

TEST(Model, HeadsMatchReferenceAndNormalize) {
  RlmModel m(tiny_config(), 8);
  auto out = m.predict(kPrefix, kSuffix, 1);
  const auto ids = assemble_prediction_input(kPrefix, kSuffix);
  const auto c = ref::encode(m, ids);
  const auto e = ref::fuse(m, 1, c, ref::mask_index(ids));
  expect_close(out.token_probs, ref::head(m, "pred", e), 1e-12);
  const auto ins = ref::head(m, "insert", e);
  EXPECT_NEAR(out.insert_probs[0], ins[0], 1e-12);
  EXPECT_NEAR(out.insert_probs[1], ins[1], 1e-12);
  EXPECT_NEAR(sum(out.token_probs), 1.0, 1e-9);
  EXPECT_NEAR(out.insert_probs[0] + out.insert_probs[1], 1.0, 1e-12);

  const TokenSeq span{11};
  const auto rids = assemble_reconstruction_input(span, kPrefix, kSuffix);
  const auto rc = ref::encode(m, rids)[ref::mask_index(rids)];
  const auto recon = m.reconstruct(span, kPrefix, kSuffix);
  expect_close(recon, ref::head(m, "recon", rc), 1e-12);
  EXPECT_NEAR(sum(recon), 1.0, 1e-9);
}

TEST(Model, ValueLevelApiAgreesWithFullPass) {
  RlmModel m(tiny_config(), 9);
  std::size_t mask = 0;
  auto contents = m.encode_content_sequence(kPrefix, kSuffix, &mask);
  const auto e = m.fuse(0, contents, mask);
  const auto full = m.predict(kPrefix, kSuffix, 0);
  expect_close(m.predict_token(e), full.token_probs, 1e-14);
  const auto ins = m.insert_decision(e);
  EXPECT_NEAR(ins[0], full.insert_probs[0], 1e-14);
  const auto cprime = m.encode_reconstruction(TokenSeq{6}, kPrefix, kSuffix);
  expect_close(m.reconstruct_token(cprime), m.reconstruct(TokenSeq{6}, kPrefix, kSuffix), 1e-14);
}

TEST(Model, ZeroedHeadsAreUniform) {
  RlmModel m(tiny_config(), 10);
  zero(m, "pred");
  zero(m, "recon");
  zero(m, "insert");
  auto out = m.predict(kPrefix, kSuffix, 0);
  for (double p : out.token_probs) EXPECT_NEAR(p, 1.0 / 16.0, 1e-15);
  EXPECT_EQ(out.insert_probs[0], 0.5);
  EXPECT_EQ(out.insert_probs[1], 0.5);
  for (double p : m.reconstruct({}, kPrefix, kSuffix)) EXPECT_NEAR(p, 1.0 / 16.0, 1e-15);
}

TEST(Model, HeadsNormalizeForArbitraryParameters) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig c = tiny_config();
    c.init_std = 2.0;
    c.style_init_std = 2.0;
    RlmModel m(c, seed);
    auto out = m.predict(kPrefix, kSuffix, seed % 2);
    EXPECT_NEAR(sum(out.token_probs), 1.0, 1e-9);
    EXPECT_NEAR(sum(m.reconstruct(TokenSeq{5, 6}, kPrefix, kSuffix)), 1.0, 1e-9);
  }
}

TEST(Model, PermutingInputChangesContent) {
  RlmModel m(tiny_config(), 11);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<TokenId> word(4, 15);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSeq pre(3), suf(3);
    for (auto& t : pre) t = word(rng);
    for (auto& t : suf) t = word(rng);
    if (pre == TokenSeq(pre.rbegin(), pre.rend()) || pre == suf) continue;
    const TokenSeq rev(pre.rbegin(), pre.rend());
    EXPECT_NE(m.encode_content(pre, suf).values, m.encode_content(rev, suf).values);
    EXPECT_NE(m.encode_content(pre, suf).values, m.encode_content(suf, pre).values);
  }
}

TEST(Model, OverlongInputReportsLengths) {
  RlmModel m(tiny_config(), 1);
  TokenSeq longer(14, 5);
  try {
    m.encode_content(longer, {});
    FAIL();
  } catch (const std::length_error& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
}

TEST(Model, LoadingRejectsShapeMismatch) {
  RlmModel m(tiny_config(), 1);
  ModelConfig other = tiny_config(13);
  EXPECT_THROW(RlmModel(other, m.params()), std::invalid_argument);
  EXPECT_NO_THROW(RlmModel(tiny_config(), m.params()));
}

TEST(Model, StyleTableInitialisedWithConfiguredStd) {
  ModelConfig c;
  c.vocab_size = 40;
  RlmModel m(c, 99);
  const auto& st = m.params().value("style").storage();
  double ss = 0.0;
  for (double v : st) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(st.size()));
  EXPECT_NEAR(sd, 0.02, 0.004);
}

TEST(Model, HeadGradientsPassGradCheck) {
  RlmModel m(tiny_config(8), 13);
  auto loss = [&](Graph& g, Binder& b) {
    const auto ids = assemble_prediction_input(TokenSeq{5, 6}, TokenSeq{9});
    auto enc = m.encode(b, ids);
    Var e = m.fuse(b, 1, enc.contents, enc.mask_pos);
    Var lp = ad::log_softmax(g, m.prediction_logits(b, e));
    Var li = ad::log_softmax(g, m.insertion_logits(b, e));
    const auto rids = assemble_reconstruction_input(TokenSeq{7}, TokenSeq{5, 6}, TokenSeq{9});
    auto renc = m.encode(b, rids);
    Var lr = ad::log_softmax(g, m.reconstruction_logits(b, ad::row(g, renc.contents, renc.mask_pos)));
    const std::vector<Var> parts{ad::pick(g, lp, 0, 7), ad::pick(g, li, 0, 1), ad::pick(g, lr, 0, 8)};
    const std::vector<double> w{-1.0, -1.0, -1.0};
    return ad::weighted_sum(g, parts, w);
  };
  auto r = grad_check(m.params(), loss);
  for (const auto& p : r.per_param) {
    EXPECT_LT(p.max_rel_error, 1e-4) << p.name << " analytic " << p.analytic << " numeric " << p.numeric;
  }
}
