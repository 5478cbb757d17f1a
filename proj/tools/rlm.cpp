// Command-line front end: corpus generation, training, transfer, evaluation
// and the decoder/oracle agreement check.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlm/checkpoint.hpp"
#include "rlm/config.hpp"
#include "rlm/corpus.hpp"
#include "rlm/decoder.hpp"
#include "rlm/metrics.hpp"
#include "rlm/oracle.hpp"
#include "rlm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace rlm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raised when an input file is missing or a flag value cannot be used.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

std::string hash_file(const std::string& path) { return fnv1a_hex(read_file(path)); }

/// Records how to reproduce a run: subcommand, resolved settings, inputs and
/// outputs with their hashes. Written as manifest-<subcommand>.json.
class Manifest {
 public:
  explicit Manifest(std::string subcommand) : subcommand_(std::move(subcommand)) {}
  void set_config(ordered_json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_arg(const std::string& key, ordered_json value) { args_[key] = std::move(value); }
  void input(const std::string& path) { inputs_.emplace_back(path, hash_file(path)); }
  void output(const std::string& path) { outputs_.emplace_back(path, hash_file(path)); }

  void write(const std::string& dir) const {
    ordered_json j;
    j["subcommand"] = subcommand_;
    j["seed"] = seed_;
    j["args"] = args_;
    j["config"] = config_;
    auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
      ordered_json a = ordered_json::array();
      for (const auto& [path, hash] : v) a.push_back({{"path", path}, {"fnv1a", hash}});
      return a;
    };
    j["inputs"] = files(inputs_);
    j["outputs"] = files(outputs_);
    write_file((fs::path(dir) / ("manifest-" + subcommand_ + ".json")).string(),
               j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  ordered_json config_ = ordered_json::object();
  ordered_json args_ = ordered_json::object();
  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

std::string parent_dir(const std::string& path) {
  const fs::path p = fs::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

/// Checkpoint plus everything needed to decode with it.
struct LoadedModel {
  Checkpoint ckpt;
  RunConfig config;
  Vocab vocab;
  std::unique_ptr<RlmModel> model;
};

LoadedModel load_model(const std::string& path) {
  require_file(path, "checkpoint");
  LoadedModel m;
  m.ckpt = Checkpoint::load(path);
  m.config = RunConfig::from_json(m.ckpt.config);
  std::vector<std::string> words(m.ckpt.vocab.begin() + Vocab::kReservedCount,
                                 m.ckpt.vocab.end());
  m.vocab = Vocab(words);
  m.model = std::make_unique<RlmModel>(model_from_checkpoint(m.ckpt));
  return m;
}

/// Decode settings from the config, overridden by whichever flags were given.
struct DecodeOverrides {
  std::optional<std::size_t> topk;
  std::optional<bool> insert;
  std::optional<bool> del;
  std::optional<std::size_t> max_insert;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--topk", topk, "Candidates scored per step");
    cmd->add_flag("--insert,!--no-insert", insert, "Allow insertion runs");
    cmd->add_flag("--delete,!--no-delete", del, "Allow [PAD] deletions");
    cmd->add_option("--max-insert", max_insert, "Longest insertion run beyond one token");
  }

  DecodeConfig apply(DecodeConfig d) const {
    if (topk) d.topk = *topk;
    if (insert) d.flags.insert = *insert;
    if (del) d.flags.del = *del;
    if (max_insert) d.flags.max_insert = *max_insert;
    if (d.topk == 0) throw UsageError("--topk must be at least 1");
    return d;
  }
};

ordered_json decode_json(const DecodeConfig& d) {
  return {{"topk", d.topk},
          {"insert", d.flags.insert},
          {"delete", d.flags.del},
          {"max_insert", d.flags.max_insert}};
}

Words split_words(const std::string& line) {
  std::istringstream in(line);
  Words w;
  for (std::string t; in >> t;) w.push_back(t);
  return w;
}

// ---------------------------------------------------------------- gen-corpus

struct GenCorpusArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int gen_corpus(const GenCorpusArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    cfg = RunConfig::load(a.config);
  }
  if (a.seed) cfg.corpus_seed = *a.seed;
  fs::create_directories(a.out);
  const Corpus corpus = generate_corpus(cfg.grammar, cfg.corpus_seed);
  write_corpus(corpus, a.out);
  const LeakageReport leak = check_leakage(corpus);
  std::cerr << "train " << corpus.train.size() << ", eval " << corpus.eval.size()
            << ", vocab " << corpus.build_vocab().word_count() << ", reference leakage "
            << leak.leaked << "/" << leak.references << (leak.flagged() ? " (FLAGGED)" : "")
            << "\n";

  Manifest m("gen-corpus");
  m.set_config(cfg.to_json());
  m.set_seed(cfg.corpus_seed);
  m.set_arg("out", a.out);
  if (!a.config.empty()) m.input(a.config);
  m.output((fs::path(a.out) / "train.jsonl").string());
  m.output((fs::path(a.out) / "eval.jsonl").string());
  m.write(a.out);
  return kExitOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string corpus;
  std::string out;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> beta;
  bool quiet = false;
};

Corpus load_corpus_dir(const std::string& dir, const std::vector<std::string>& styles) {
  const std::string train = (fs::path(dir) / "train.jsonl").string();
  const std::string eval = (fs::path(dir) / "eval.jsonl").string();
  require_file(train, "train split");
  require_file(eval, "eval split");
  return read_corpus(train, eval, styles);
}

int train(const TrainArgs& a) {
  std::optional<Checkpoint> resume;
  RunConfig cfg;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    resume = Checkpoint::load(a.resume);
    cfg = RunConfig::from_json(resume->config);
  } else {
    require_file(a.config, "config");
    cfg = RunConfig::load(a.config);
  }
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.steps) cfg.train.steps = *a.steps;
  if (a.beta) cfg.train.weights.beta = *a.beta;
  cfg.validate();

  const Corpus corpus = load_corpus_dir(a.corpus, cfg.grammar.styles);
  fs::create_directories(a.out);
  std::unique_ptr<Trainer> trainer;
  if (resume) {
    Checkpoint ck = *resume;
    if (a.seed && *a.seed != RunConfig::from_json(ck.config).train.seed) {
      throw UsageError("--seed cannot change the seed of a resumed run");
    }
    ck.config = cfg.to_json();
    trainer = std::make_unique<Trainer>(ck, corpus);
  } else {
    trainer = std::make_unique<Trainer>(cfg, corpus);
  }

  run_training(*trainer, a.out, [&](const StepRecord& r) {
    if (!a.quiet && (r.step % 100 == 0 || r.step == cfg.train.steps)) {
      std::cerr << r.to_json().dump() << "\n";
    }
  });

  Manifest m("train");
  m.set_config(cfg.to_json());
  m.set_seed(cfg.train.seed);
  m.set_arg("corpus", a.corpus);
  m.set_arg("out", a.out);
  if (!a.config.empty() && !resume) m.input(a.config);
  if (resume) m.input(a.resume);
  m.input((fs::path(a.corpus) / "train.jsonl").string());
  m.input((fs::path(a.corpus) / "eval.jsonl").string());
  m.output((fs::path(a.out) / "metrics.jsonl").string());
  for (std::size_t s = cfg.train.eval_interval; s < cfg.train.steps; s += cfg.train.eval_interval) {
    const std::string p = (fs::path(a.out) / ("ckpt-" + std::to_string(s) + ".bin")).string();
    if (fs::exists(p)) m.output(p);
  }
  m.output((fs::path(a.out) / "final.bin").string());
  m.write(a.out);
  return kExitOk;
}

// ------------------------------------------------------------------ transfer

struct TransferArgs {
  std::string checkpoint;
  std::string input = "-";
  std::string output = "-";
  std::string style;
  DecodeOverrides decode;
  std::optional<std::uint64_t> seed;
  bool trace = false;
};

int transfer_cmd(const TransferArgs& a) {
  LoadedModel lm = load_model(a.checkpoint);
  const DecodeConfig dc = a.decode.apply(lm.config.decode);
  StyleId style = 0;
  try {
    style = lm.config.grammar.style_id(a.style);
  } catch (const std::exception&) {
    throw UsageError("unknown style '" + a.style + "'");
  }

  std::ifstream file_in;
  std::istream* in = &std::cin;
  if (a.input != "-") {
    require_file(a.input, "input");
    file_in.open(a.input, std::ios::binary);
    in = &file_in;
  }
  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (a.output != "-") {
    file_out.open(a.output, std::ios::binary);
    if (!file_out) throw std::runtime_error("cannot write " + a.output);
    out = &file_out;
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    const Words words = split_words(line);
    for (const auto& w : words) {
      if (!lm.vocab.contains(w)) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": unknown word '" + w +
                                 "'");
      }
    }
    ordered_json rec;
    if (words.empty()) {
      rec["tokens"] = Words{};
      rec["style"] = a.style;
      rec["source"] = Words{};
      rec["log_score"] = 0.0;
      rec["alignment"] = std::vector<std::size_t>{0};
    } else {
      const TransferResult r = transfer(*lm.model, lm.vocab.encode(words), style, dc.topk, dc.flags);
      rec["tokens"] = lm.vocab.decode(r.y);
      rec["style"] = a.style;
      rec["source"] = words;
      rec["log_score"] = r.log_score;
      rec["alignment"] = r.alignment;
      if (a.trace) {
        ordered_json steps = ordered_json::array();
        for (const auto& t : r.trace) {
          steps.push_back({{"position", t.position},
                           {"token", lm.vocab.word(t.chosen.token)},
                           {"pred", t.chosen.pred_prob},
                           {"recon", t.chosen.recon_prob},
                           {"insert_prob", t.insert_prob},
                           {"score", t.score}});
        }
        rec["trace"] = steps;
      }
    }
    *out << rec.dump() << "\n";
    out->flush();
  }

  if (a.output != "-") {
    file_out.close();
    Manifest m("transfer");
    m.set_config(decode_json(dc));
    m.set_seed(a.seed.value_or(lm.config.train.seed));
    m.set_arg("style", a.style);
    m.input(a.checkpoint);
    if (a.input != "-") m.input(a.input);
    m.output(a.output);
    m.write(parent_dir(a.output));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string stub;
  std::string config;
  std::string eval_file;
  std::string out;
  std::string classifier = "rule";
  std::string train_file;
  DecodeOverrides decode;
  std::vector<std::size_t> sweep_topk;
  bool ablations = false;
  std::vector<std::string> extra;
  std::optional<std::size_t> limit;
  bool with_rows = false;
};

std::unique_ptr<StyleClassifier> make_classifier(const EvalArgs& a, const RunConfig& cfg) {
  if (a.classifier == "rule") return std::make_unique<RuleClassifier>(cfg.grammar.lexicons());
  if (a.train_file.empty()) throw UsageError("--classifier linear needs --train");
  require_file(a.train_file, "train split");
  const Corpus c = read_corpus(a.train_file, "", cfg.grammar.styles);
  return std::make_unique<LinearClassifier>(c.train, cfg.grammar.styles.size());
}

TransferFn model_transfer(const LoadedModel& lm, const DecodeConfig& dc) {
  return [&lm, dc](const Words& src, StyleId target) {
    const TransferResult r = transfer(*lm.model, lm.vocab.encode(src), target, dc.topk, dc.flags);
    return lm.vocab.decode(r.y);
  };
}

std::string topk_label(std::size_t k) { return "top-" + std::to_string(k); }

int eval_cmd(const EvalArgs& a) {
  if (a.checkpoint.empty() == a.stub.empty()) {
    throw UsageError("give exactly one of --checkpoint and --stub");
  }
  if (!a.stub.empty() && a.stub != "gold" && a.stub != "identity") {
    throw UsageError("--stub must be gold or identity");
  }

  std::optional<LoadedModel> lm;
  RunConfig cfg;
  if (!a.checkpoint.empty()) {
    lm = load_model(a.checkpoint);
    cfg = lm->config;
  } else if (!a.config.empty()) {
    require_file(a.config, "config");
    cfg = RunConfig::load(a.config);
  }
  require_file(a.eval_file, "eval split");
  Corpus corpus = read_corpus("", a.eval_file, cfg.grammar.styles);
  if (a.limit && *a.limit < corpus.eval.size()) corpus.eval.resize(*a.limit);
  const auto classifier = make_classifier(a, cfg);
  const DecodeConfig dc = a.decode.apply(cfg.decode);

  std::vector<EvalReport> reports;
  if (!a.stub.empty()) {
    // The gold stub looks up the first reference of the source it is given.
    std::map<std::pair<Words, StyleId>, Words> gold;
    for (const auto& p : corpus.eval) {
      for (const auto& [t, refs] : p.refs) gold.emplace(std::pair{p.source, t}, refs.front());
    }
    const bool use_gold = a.stub == "gold";
    reports.push_back(evaluate(
        corpus.eval,
        [&](const Words& src, StyleId t) { return use_gold ? gold.at({src, t}) : src; },
        *classifier, a.stub));
  } else {
    reports.push_back(evaluate(corpus.eval, model_transfer(*lm, dc), *classifier, "RLM"));
    for (std::size_t k : a.sweep_topk) {
      if (k == 0) throw UsageError("--sweep-topk values must be at least 1");
      DecodeConfig d = dc;
      d.topk = k;
      reports.push_back(evaluate(corpus.eval, model_transfer(*lm, d), *classifier, topk_label(k)));
    }
    if (a.ablations) {
      DecodeConfig d = dc;
      d.flags.insert = false;
      reports.push_back(evaluate(corpus.eval, model_transfer(*lm, d), *classifier, "No insert"));
      d = dc;
      d.flags.del = false;
      reports.push_back(evaluate(corpus.eval, model_transfer(*lm, d), *classifier, "No delete"));
    }
  }
  // Extra rows from other checkpoints, e.g. "No I(s;c)=runs/beta0/final.bin".
  std::vector<std::unique_ptr<LoadedModel>> extras;
  for (const auto& entry : a.extra) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--extra wants LABEL=CHECKPOINT");
    extras.push_back(std::make_unique<LoadedModel>(load_model(entry.substr(eq + 1))));
    if (extras.back()->vocab.words() != (lm ? lm->vocab.words() : extras.back()->vocab.words())) {
      throw UsageError("--extra checkpoint has a different vocabulary");
    }
    reports.push_back(evaluate(corpus.eval, model_transfer(*extras.back(), dc), *classifier,
                               entry.substr(0, eq)));
  }

  std::cout << report_table(reports);
  if (!a.out.empty()) {
    ordered_json j;
    j["decode"] = decode_json(dc);
    j["classifier"] = a.classifier;
    j["reports"] = ordered_json::array();
    for (const auto& r : reports) j["reports"].push_back(r.to_json(cfg.grammar.styles, a.with_rows));
    write_file(a.out, j.dump(2) + "\n");

    Manifest m("eval");
    m.set_config(cfg.to_json());
    m.set_seed(cfg.train.seed);
    m.set_arg("stub", a.stub);
    m.set_arg("sweep_topk", a.sweep_topk);
    m.set_arg("ablations", a.ablations);
    m.set_arg("limit", a.limit ? ordered_json(*a.limit) : ordered_json());
    if (!a.checkpoint.empty()) m.input(a.checkpoint);
    for (const auto& entry : a.extra) m.input(entry.substr(entry.find('=') + 1));
    if (!a.config.empty() && a.checkpoint.empty()) m.input(a.config);
    m.input(a.eval_file);
    if (!a.train_file.empty()) m.input(a.train_file);
    m.output(a.out);
    m.write(parent_dir(a.out));
  }
  return kExitOk;
}

// -------------------------------------------------------------- oracle-check

struct OracleArgs {
  std::string checkpoint;
  std::size_t instances = 200;
  std::size_t vocab = 12;
  std::size_t len = 4;
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
  std::string out;
};

int oracle_cmd(const OracleArgs& a) {
  OracleCheckConfig oc{a.instances, a.vocab, a.len, a.seed};
  OracleModelSource source;
  std::shared_ptr<const RlmModel> fixed;
  if (!a.checkpoint.empty()) {
    auto lm = load_model(a.checkpoint);
    fixed = std::shared_ptr<const RlmModel>(std::move(lm.model));
    source = [fixed](std::mt19937_64&) -> std::shared_ptr<const ScoringModel> { return fixed; };
  } else {
    if (a.vocab == 0 || a.vocab > kOracleMaxWords) {
      throw UsageError("--vocab must be in 1.." + std::to_string(kOracleMaxWords));
    }
    source = random_tiny_models(a.vocab);
  }
  if (a.len == 0) throw UsageError("--len must be at least 1");
  const OracleReport report = run_oracle_check(oc, source);
  std::cout << report.to_json() << "\n";
  if (!a.out.empty()) {
    write_file(a.out, report.to_json() + "\n");
    Manifest m("oracle-check");
    m.set_seed(a.seed);
    m.set_arg("instances", a.instances);
    m.set_arg("vocab", a.vocab);
    m.set_arg("len", a.len);
    m.set_arg("tolerance", a.tolerance);
    if (!a.checkpoint.empty()) m.input(a.checkpoint);
    m.output(a.out);
    m.write(parent_dir(a.out));
  }
  return report.passed(a.tolerance) ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replacing language model for text style transfer"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  auto* c_gen = app.add_subcommand("gen-corpus", "Generate the synthetic parallel corpus");
  c_gen->add_option("--config", gen.config, "Run config (grammar and corpus seed)");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--seed", gen.seed, "Override the corpus seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model on a corpus directory");
  c_train->add_option("--config", tr.config, "Run config");
  c_train->add_option("--corpus", tr.corpus, "Directory with train.jsonl and eval.jsonl")
      ->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--resume", tr.resume, "Continue from this checkpoint");
  c_train->add_option("--seed", tr.seed, "Override the training seed");
  c_train->add_option("--steps", tr.steps, "Override the step count");
  c_train->add_option("--beta", tr.beta, "Override the CLUB weight (0 disables it)");
  c_train->add_flag("--quiet", tr.quiet, "Do not print loss records");

  TransferArgs tf;
  auto* c_tf = app.add_subcommand("transfer", "Rewrite sentences into a target style");
  c_tf->add_option("--checkpoint", tf.checkpoint, "Model checkpoint")->required();
  c_tf->add_option("--style", tf.style, "Target style name")->required();
  c_tf->add_option("--input", tf.input, "One sentence per line, '-' for stdin");
  c_tf->add_option("--output", tf.output, "JSONL records, '-' for stdout");
  c_tf->add_option("--seed", tf.seed, "Recorded in the manifest; decoding is deterministic");
  c_tf->add_flag("--trace", tf.trace, "Include per-step scores");
  tf.decode.add_to(c_tf);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score transfers on the eval split");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  c_ev->add_option("--stub", ev.stub, "Score a stub instead: gold or identity");
  c_ev->add_option("--config", ev.config, "Run config for the stub's grammar");
  c_ev->add_option("--eval", ev.eval_file, "eval.jsonl")->required();
  c_ev->add_option("--train", ev.train_file, "train.jsonl for the linear classifier");
  c_ev->add_option("--classifier", ev.classifier, "rule or linear")
      ->check(CLI::IsMember({"rule", "linear"}));
  c_ev->add_option("--out", ev.out, "Write the JSON report here");
  c_ev->add_option("--sweep-topk", ev.sweep_topk, "Extra rows decoded with these K")
      ->delimiter(',');
  c_ev->add_flag("--ablations", ev.ablations, "Add no-insert and no-delete rows");
  c_ev->add_option("--extra", ev.extra, "Extra row LABEL=CHECKPOINT");
  c_ev->add_option("--limit", ev.limit, "Score only the first N eval records");
  c_ev->add_flag("--rows", ev.with_rows, "Include every output in the JSON report");
  ev.decode.add_to(c_ev);

  OracleArgs oa;
  auto* c_or = app.add_subcommand("oracle-check", "Compare the decoder with exhaustive search");
  c_or->add_option("--checkpoint", oa.checkpoint, "Check this model instead of random ones");
  c_or->add_option("--instances", oa.instances, "Random instances");
  c_or->add_option("--vocab", oa.vocab, "Ordinary words of the random models");
  c_or->add_option("--len", oa.len, "Longest source sentence");
  c_or->add_option("--seed", oa.seed, "Instance seed");
  c_or->add_option("--tolerance", oa.tolerance, "Relative log-score tolerance");
  c_or->add_option("--out", oa.out, "Write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_gen->parsed()) return gen_corpus(gen);
    if (c_train->parsed()) {
      if (tr.config.empty() && tr.resume.empty()) throw UsageError("train needs --config or --resume");
      return train(tr);
    }
    if (c_tf->parsed()) return transfer_cmd(tf);
    if (c_ev->parsed()) return eval_cmd(ev);
    if (c_or->parsed()) return oracle_cmd(oa);
  } catch (const UsageError& e) {
    std::cerr << "rlm: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "rlm: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "rlm: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
