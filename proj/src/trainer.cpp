#include "rlm/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rlm {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kEpochStream = 0x45504f4348ull;
constexpr std::uint64_t kQSeedStream = 0x51ull;

ModelConfig complete(ModelConfig m, std::size_t vocab, std::size_t styles) {
  m.vocab_size = vocab;
  m.styles = styles;
  m.validate();
  return m;
}

AdamConfig adam(double lr, double wd) {
  AdamConfig a;
  a.lr = lr;
  a.weight_decay = wd;
  return a;
}

std::string diagnostics(std::size_t step, const LossBreakdown& b) {
  std::ostringstream os;
  os.precision(17);
  os << "non-finite loss at step " << step << ": l1=" << b.l1 << " l2=" << b.l2
     << " recon=" << b.l3_or_recon << " insert=" << b.insert << " total=" << b.total;
  return os.str();
}

bool finite(const Gradients& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (double v : g[i]) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

nlohmann::ordered_json StepRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["l1"] = loss.l1;
  j["l2"] = loss.l2;
  j["recon"] = loss.l3_or_recon;
  j["insert"] = loss.insert;
  j["total"] = loss.total;
  j["q_loss"] = q_loss;
  j["examples"] = examples;
  return j;
}

Trainer::Trainer(RunConfig config, const Corpus& corpus) : config_(std::move(config)) {
  config_.validate();
  vocab_ = corpus.build_vocab();
  init_common(corpus);
  model_ = std::make_unique<RlmModel>(
      complete(config_.model, vocab_.size(), styles_.size()), config_.train.seed);
  auto qrng = stream(config_.train.seed, kQSeedStream, 0);
  q_ = std::make_unique<QClassifier>(config_.model.dim, styles_.size(), qrng());
  model_opt_ = std::make_unique<AdamW>(model_->params(),
                                       adam(config_.train.lr, config_.train.weight_decay));
  q_opt_ = std::make_unique<AdamW>(q_->params(),
                                   adam(config_.train.q_lr, config_.train.weight_decay));
}

Trainer::Trainer(const Checkpoint& ckpt, const Corpus& corpus)
    : config_(RunConfig::from_json(nlohmann::json::parse(ckpt.config.dump()))),
      vocab_(std::vector<std::string>(ckpt.vocab.begin() + Vocab::kReservedCount,
                                      ckpt.vocab.end())) {
  if (vocab_.words() != ckpt.vocab) throw std::runtime_error("checkpoint vocabulary is malformed");
  if (corpus.styles != ckpt.styles) throw std::runtime_error("corpus styles differ from checkpoint");
  init_common(corpus);
  model_ = std::make_unique<RlmModel>(model_from_checkpoint(ckpt));
  q_ = std::make_unique<QClassifier>(config_.model.dim, styles_.size(), ckpt.q);
  model_opt_ = std::make_unique<AdamW>(
      model_->params(), adam(config_.train.lr, config_.train.weight_decay), ckpt.model_opt);
  q_opt_ = std::make_unique<AdamW>(q_->params(),
                                   adam(config_.train.q_lr, config_.train.weight_decay),
                                   ckpt.q_opt);
  step_ = ckpt.step;
}

void Trainer::init_common(const Corpus& corpus) {
  styles_ = corpus.styles;
  if (styles_.size() < 2) throw std::invalid_argument("training needs at least two styles");
  if (corpus.train.size() < 2) throw std::invalid_argument("training needs at least two sentences");
  for (const auto& s : corpus.train) {
    for (const auto& w : s.tokens) {
      if (!vocab_.contains(w)) throw std::runtime_error("word '" + w + "' is not in the vocabulary");
    }
    sentences_.push_back(s.tokens);
    encoded_.push_back(vocab_.encode(s.tokens));
    sentence_styles_.push_back(s.style);
  }
  salience_ = SalienceTable(corpus.train, styles_.size());
}

const Batching& Trainer::epoch_batches(std::size_t epoch) const {
  auto it = epochs_.find(epoch);
  if (it != epochs_.end()) return it->second;
  if (epochs_.size() > 4) epochs_.erase(epochs_.begin());
  std::vector<std::size_t> lengths;
  for (const auto& s : encoded_) lengths.push_back(s.size());
  auto rng = stream(config_.train.seed, kEpochStream, epoch);
  return epochs_.emplace(epoch, batch_by_length(lengths, config_.train.batch, rng)).first->second;
}

std::vector<TrainExample> Trainer::make_batch(std::size_t step) const {
  const std::size_t per_epoch =
      (encoded_.size() + config_.train.batch - 1) / config_.train.batch;
  const auto& batching = epoch_batches(step / per_epoch);
  const auto& idx = batching.batches.at(step % per_epoch);
  const auto& t = config_.train;
  MaskPolicy policy;
  policy.salience = &salience_;
  policy.lambda = t.mask_lambda;
  policy.uniform_prob = t.uniform_mask_prob;
  std::vector<TrainExample> out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    auto rng = stream(t.seed, step + 1, k);
    auto m = make_masked_sample(sentences_[i], sentence_styles_[i], vocab_, rng, policy);
    if (!m) continue;
    TrainExample ex;
    ex.masked = std::move(*m);
    std::uniform_int_distribution<std::size_t> other(0, styles_.size() - 2);
    const auto o = static_cast<StyleId>(other(rng));
    ex.other_style = o >= ex.masked.style ? o + 1 : o;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (encoded_[i].size() > t.max_gap && u(rng) < t.gap_prob) {
      ex.gap = make_gap_sample(encoded_[i], sentence_styles_[i], rng, t.max_gap);
    }
    if (encoded_[i].size() >= 2 && u(rng) < t.deletion_prob) {
      ex.deletion = make_deletion_sample(encoded_[i], sentence_styles_[i], rng);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

LossBreakdown Trainer::main_step(const std::vector<TrainExample>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto& t = config_.train;
  LossOptions opts;
  opts.topk = t.topk;
  opts.club_all_positions = t.club_all_positions;
  opts.recon = t.recon;
  const auto ctx = BatchContext::from(batch, styles_.size(), t.weights, opts);
  Gradients grads(model_->params());
  std::vector<ExampleStats> stats(batch.size());
  // One graph per example keeps memory flat; gradients accumulate in order.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Graph g;
    Binder bind(g, model_->params(), &grads);
    Binder q_bind(g, q_->params(), nullptr);
    try {
      g.backward(example_loss(g, bind, q_bind, *model_, *q_, batch[i], ctx, &stats[i]));
    } catch (const std::domain_error& e) {
      throw std::runtime_error("non-finite loss at step " + std::to_string(step_ + 1) +
                               ", example " + std::to_string(i) + ": " + e.what());
    }
  }
  const auto b = summarize(stats, ctx);
  if (!std::isfinite(b.total) || !finite(grads)) throw std::runtime_error(diagnostics(step_ + 1, b));
  model_opt_->step(model_->params(), grads);
  return b;
}

double Trainer::q_step(const std::vector<TrainExample>& batch) {
  std::vector<std::vector<double>> contents;
  std::vector<StyleId> styles;
  for (const auto& ex : batch) {
    const auto& m = ex.masked;
    if (config_.train.club_all_positions) {
      std::size_t mask = 0;
      for (auto& c : model_->encode_content_sequence(m.prefix, m.suffix, &mask)) {
        contents.push_back(std::move(c.values));
        styles.push_back(m.style);
      }
    } else {
      contents.push_back(model_->encode_content(m.prefix, m.suffix).values);
      styles.push_back(m.style);
    }
  }
  const double value = q_update(*q_, *q_opt_, contents, styles);
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite Q loss at step " + std::to_string(step_ + 1));
  }
  return value;
}

StepRecord Trainer::step() {
  const auto batch = make_batch(step_);
  StepRecord r;
  r.examples = batch.size();
  r.q_loss = q_step(batch);
  r.loss = main_step(batch);
  r.step = ++step_;
  return r;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_.to_json();
  c.vocab = vocab_.words();
  c.styles = styles_;
  c.step = step_;
  c.model = model_->params();
  c.q = q_->params();
  c.model_opt = model_opt_->state();
  c.q_opt = q_opt_->state();
  return c;
}

double q_update(QClassifier& q, AdamW& opt, const std::vector<std::vector<double>>& contents,
                const std::vector<StyleId>& styles) {
  Graph g;
  Gradients grads(q.params());
  Binder q_bind(g, q.params(), &grads);
  Var loss = q_objective(g, q_bind, q, contents, styles);
  g.backward(loss);
  const double value = g.scalar(loss);
  if (std::isfinite(value) && finite(grads)) opt.step(q.params(), grads);
  return value;
}

RlmModel model_from_checkpoint(const Checkpoint& ckpt) {
  const auto cfg = RunConfig::from_json(nlohmann::json::parse(ckpt.config.dump()));
  return RlmModel(complete(cfg.model, ckpt.vocab.size(), ckpt.styles.size()), ckpt.model);
}

Checkpoint run_training(Trainer& trainer, const std::string& out_dir,
                        const std::function<void(const StepRecord&)>& on_step) {
  const auto& t = trainer.config().train;
  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir + "/metrics.jsonl";
    // A resumed run drops records written after its checkpoint.
    std::string kept;
    if (trainer.step_count() > 0 && std::filesystem::exists(path)) {
      std::istringstream in(read_file(path));
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("step")) continue;
        if (rec.at("step").get<std::size_t>() <= trainer.step_count()) kept += line + '\n';
      }
    }
    metrics.open(path, std::ios::trunc);
    metrics << kept;
    if (!metrics) throw std::runtime_error("cannot write " + path);
  }
  while (trainer.step_count() < t.steps) {
    const auto rec = trainer.step();
    if (metrics.is_open()) metrics << rec.to_json().dump() << '\n' << std::flush;
    if (on_step) on_step(rec);
    if (!out_dir.empty() && rec.step % t.eval_interval == 0 && rec.step < t.steps) {
      trainer.checkpoint().save(out_dir + "/ckpt-" + std::to_string(rec.step) + ".bin");
    }
  }
  auto final = trainer.checkpoint();
  if (!out_dir.empty()) final.save(out_dir + "/final.bin");
  return final;
}

}  // namespace rlm
