#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rlm/trainer.hpp"

using namespace rlm;

namespace {

RunConfig small_run() {
  RunConfig c;
  c.grammar.train_per_style = 60;
  c.grammar.eval_per_style = 10;
  c.model.dim = 8;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.ff_dim = 16;
  c.model.init_std = 0.1;
  c.model.style_init_std = 0.1;
  c.train.lr = 1e-3;
  c.train.q_lr = 1e-3;
  c.train.batch = 4;
  c.train.steps = 6;
  c.train.topk = 2;
  c.train.eval_interval = 3;
  c.train.uniform_mask_prob = 0.5;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

bool same_values(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.storage() != b[i].value.storage()) return false;
  }
  return true;
}

}  // namespace

TEST(AdamW, ZeroGradientDecaysExactly) {
  ParameterSet p;
  p.add("w", Tensor::row({1.5, -2.0, 0.25}));
  AdamConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.01;
  AdamW opt(p, c);
  Gradients g(p);
  const auto before = p[0].value.storage();
  opt.step(p, g);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(p[0].value[i], before[i] * (1.0 - 0.1 * 0.01));
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParameterSet p;
  p.add("w", Tensor::row({1.0, 1.0}));
  AdamConfig c;
  c.lr = 0.01;
  c.weight_decay = 0.0;
  AdamW opt(p, c);
  Gradients g(p);
  g[0] = {3.0, -0.5};
  opt.step(p, g);
  // Bias-corrected m/sqrt(v) is sign(g) on the first step.
  EXPECT_NEAR(p[0].value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[0].value[1], 1.0 + 0.01, 1e-9);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
  auto cfg = small_run();
  cfg.train.lr = 0.0;
  cfg.train.q_lr = 0.0;
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  const ParameterSet m0 = t.model().params(), q0 = t.q().params();
  t.step();
  t.step();
  EXPECT_TRUE(same_values(t.model().params(), m0));
  EXPECT_TRUE(same_values(t.q().params(), q0));
}

TEST(Trainer, SameSeedSameLossSequence) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer a(cfg, corpus), b(cfg, corpus);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a.step().to_json().dump(), b.step().to_json().dump());
  }
  EXPECT_EQ(a.checkpoint().serialize(), b.checkpoint().serialize());
}

TEST(Trainer, BreakdownTotalIsRecomputable) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  const auto r = t.step();
  const auto& b = r.loss;
  EXPECT_NEAR(b.total, -b.l1 + b.weights.beta * b.l2 + b.weights.w_r * b.l3_or_recon +
                           b.weights.w_ins * b.insert, 1e-12);
  EXPECT_EQ(r.examples, cfg.train.batch);
}

TEST(Trainer, BatchesAreDeterministicAndCoverEpoch) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto a = t.make_batch(s), b = t.make_batch(s);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].masked.prediction_input, b[i].masked.prediction_input);
      EXPECT_NE(a[i].other_style, a[i].masked.style);
      if (a[i].gap) EXPECT_EQ(a[i].gap->label == Vocab::kMask, a[i].gap->width >= 2);
    }
  }
}

TEST(Trainer, NonFiniteLossAbortsWithDiagnostics) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  auto batch = t.make_batch(0);
  auto& model = const_cast<RlmModel&>(t.model());
  model.params().value("pred.b")[5] = std::nan("");
  try {
    t.main_step(batch);
    FAIL() << "expected an abort";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
  }
}

// Style 0 at +e_0, style 1 at -e_0, with small offsets on the other axes.
TEST(QStep, SeparableContentsReachFullAccuracy) {
  std::vector<std::vector<double>> contents;
  std::vector<StyleId> styles;
  for (int i = 0; i < 32; ++i) {
    const StyleId s = static_cast<StyleId>(i % 2);
    std::vector<double> c(8, 0.0);
    c[0] = s == 0 ? 1.0 : -1.0;
    c[1 + static_cast<std::size_t>(i) % 7] = 0.3;
    contents.push_back(c);
    styles.push_back(s);
  }
  QClassifier q(8, 2, 5);
  AdamConfig ac;
  ac.lr = 1e-2;
  AdamW opt(q.params(), ac);
  auto accuracy = [&] {
    std::size_t right = 0;
    for (std::size_t i = 0; i < contents.size(); ++i) {
      const auto lp = q.log_probs(contents[i]);
      right += (lp[styles[i]] > lp[1 - styles[i]]);
    }
    return static_cast<double>(right) / static_cast<double>(contents.size());
  };
  int steps = 0;
  while (accuracy() < 1.0 && steps < 500) {
    q_update(q, opt, contents, styles);
    ++steps;
  }
  EXPECT_EQ(accuracy(), 1.0);
  EXPECT_LE(steps, 500);
}

TEST(QStep, ZeroLearningRateLeavesQ) {
  QClassifier q(4, 2, 6);
  AdamConfig ac;
  ac.lr = 0.0;
  AdamW opt(q.params(), ac);
  const ParameterSet before = q.params();
  q_update(q, opt, {{1, 0, 0, 0}, {0, 1, 0, 0}}, {0, 1});
  EXPECT_TRUE(same_values(q.params(), before));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  t.step();
  const auto bytes = t.checkpoint().serialize();
  EXPECT_EQ(bytes.substr(0, 8), "RLMCKPT1");
  EXPECT_EQ(Checkpoint::deserialize(bytes).serialize(), bytes);
  const auto dir = temp_dir("rlm_ckpt_roundtrip");
  t.checkpoint().save((dir / "a.bin").string());
  EXPECT_EQ(Checkpoint::load((dir / "a.bin").string()).serialize(), bytes);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  EXPECT_THROW(Checkpoint::deserialize("NOTACKPT"), std::runtime_error);
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  const auto bytes = Trainer(cfg, corpus).checkpoint().serialize();
  EXPECT_THROW(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  EXPECT_THROW(Checkpoint::deserialize(bytes + "x"), std::runtime_error);
}

TEST(Checkpoint, ZeroStepsEqualsInitialization) {
  auto cfg = small_run();
  cfg.train.steps = 0;
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  const auto init = t.checkpoint().serialize();
  const auto dir = temp_dir("rlm_zero_steps");
  const auto final = run_training(t, dir.string());
  EXPECT_EQ(final.serialize(), init);
  EXPECT_EQ(final.step, 0u);
  RlmModel fresh(t.model().config(), cfg.train.seed);
  EXPECT_TRUE(same_values(final.model, fresh.params()));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ResumedRunEqualsUninterrupted) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  const auto full_dir = temp_dir("rlm_full_run"), part_dir = temp_dir("rlm_part_run");
  Trainer full(cfg, corpus);
  const auto want = run_training(full, full_dir.string()).serialize();
  EXPECT_TRUE(std::filesystem::exists(full_dir / "ckpt-3.bin"));

  // Interrupt after the step-3 checkpoint, then resume from it.
  auto part_cfg = cfg;
  part_cfg.train.steps = 4;
  Trainer part(part_cfg, corpus);
  run_training(part, part_dir.string());
  const auto ckpt = Checkpoint::load((part_dir / "ckpt-3.bin").string());
  auto resumed_ckpt = ckpt;
  resumed_ckpt.config["train"]["steps"] = cfg.train.steps;
  Trainer resumed(resumed_ckpt, corpus);
  EXPECT_EQ(resumed.step_count(), 3u);
  const auto got = run_training(resumed, part_dir.string()).serialize();
  EXPECT_EQ(got, want);
  EXPECT_EQ(read_file((part_dir / "metrics.jsonl").string()),
            read_file((full_dir / "metrics.jsonl").string()));
  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(part_dir);
}

TEST(Checkpoint, ModelFromCheckpointPredictsLikeTrainer) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  Trainer t(cfg, corpus);
  t.step();
  const auto m = model_from_checkpoint(t.checkpoint());
  const TokenSeq pre{4, 5}, suf{6};
  EXPECT_EQ(m.predict(pre, suf, 1).token_probs, t.model().predict(pre, suf, 1).token_probs);
}

TEST(Trainer, MetricsLogHasOneRecordPerStep) {
  const auto cfg = small_run();
  const auto corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  const auto dir = temp_dir("rlm_metrics_log");
  Trainer t(cfg, corpus);
  run_training(t, dir.string());
  std::ifstream in(dir / "metrics.jsonl");
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::size_t>(), n + 1);
    for (const char* k : {"l1", "l2", "recon", "insert", "total"}) EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(n, cfg.train.steps);
  std::filesystem::remove_all(dir);
}

TEST(RunConfig, JsonRoundTrip) {
  auto cfg = small_run();
  cfg.train.recon = ReconMode::kL3;
  cfg.decode.flags.insert = false;
  const auto back = RunConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), cfg.to_json().dump());
  EXPECT_EQ(back.train.recon, ReconMode::kL3);
  EXPECT_FALSE(back.decode.flags.insert);
}

TEST(RunConfig, UnknownKeysAndBadValuesAreErrors) {
  EXPECT_THROW(RunConfig::from_json(nlohmann::json::parse(R"({"train": {"lrr": 1}})")), ConfigError);
  EXPECT_THROW(RunConfig::from_json(nlohmann::json::parse(R"({"model": {"dim": "x"}})")), ConfigError);
  EXPECT_THROW(RunConfig::from_json(nlohmann::json::parse(R"({"train": {"batch": 1}})")), ConfigError);
  EXPECT_THROW(RunConfig::from_json(nlohmann::json::parse(R"({"train": {"recon": "mse"}})")), ConfigError);
}
