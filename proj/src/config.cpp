#include "rlm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace rlm {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(std::string("section '") + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& field, const char* section) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "' in section '" + section + "'");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(q_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (batch < 2) throw ConfigError("batch must be at least 2");
  if (topk == 0) throw ConfigError("train topk must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (weights.beta < 0.0 || weights.w_r < 0.0 || weights.w_ins < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  for (double p : {uniform_mask_prob, gap_prob, deletion_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must lie in [0, 1]");
  }
  if (max_gap < 1) throw ConfigError("max_gap must be at least 1");
}

void RunConfig::validate() const {
  try {
    grammar.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  ModelConfig probe = model;
  probe.vocab_size = Vocab::kReservedCount + 1;
  probe.styles = grammar.styles.size();
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (decode.topk == 0) throw ConfigError("decode topk must be positive");
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, "root", {"corpus", "model", "train", "decode"});
  RunConfig c;
  if (j.contains("corpus")) {
    const auto& s = j.at("corpus");
    check_keys(s, "corpus", {"seed", "grammar"});
    read(s, "seed", c.corpus_seed, "corpus");
    if (s.contains("grammar")) {
      try {
        c.grammar = s.at("grammar").get<GrammarConfig>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("bad grammar: ") + e.what());
      }
    }
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    check_keys(s, "model", {"dim", "layers", "heads", "ff_dim", "max_len", "init_std",
                            "style_init_std", "ln_eps"});
    read(s, "dim", c.model.dim, "model");
    read(s, "layers", c.model.layers, "model");
    read(s, "heads", c.model.heads, "model");
    read(s, "ff_dim", c.model.ff_dim, "model");
    read(s, "max_len", c.model.max_len, "model");
    read(s, "init_std", c.model.init_std, "model");
    read(s, "style_init_std", c.model.style_init_std, "model");
    read(s, "ln_eps", c.model.ln_eps, "model");
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    check_keys(s, "train", {"lr", "q_lr", "batch", "steps", "weight_decay", "beta", "w_r",
                            "w_ins", "topk", "seed", "eval_interval", "mask_lambda",
                            "uniform_mask_prob", "gap_prob", "deletion_prob", "max_gap",
                            "club_all_positions", "recon"});
    auto& t = c.train;
    read(s, "lr", t.lr, "train");
    read(s, "q_lr", t.q_lr, "train");
    read(s, "batch", t.batch, "train");
    read(s, "steps", t.steps, "train");
    read(s, "weight_decay", t.weight_decay, "train");
    read(s, "beta", t.weights.beta, "train");
    read(s, "w_r", t.weights.w_r, "train");
    read(s, "w_ins", t.weights.w_ins, "train");
    read(s, "topk", t.topk, "train");
    read(s, "seed", t.seed, "train");
    read(s, "eval_interval", t.eval_interval, "train");
    read(s, "mask_lambda", t.mask_lambda, "train");
    read(s, "uniform_mask_prob", t.uniform_mask_prob, "train");
    read(s, "gap_prob", t.gap_prob, "train");
    read(s, "deletion_prob", t.deletion_prob, "train");
    read(s, "max_gap", t.max_gap, "train");
    read(s, "club_all_positions", t.club_all_positions, "train");
    std::string recon = t.recon == ReconMode::kNll ? "nll" : "l3";
    read(s, "recon", recon, "train");
    if (recon == "nll") {
      t.recon = ReconMode::kNll;
    } else if (recon == "l3") {
      t.recon = ReconMode::kL3;
    } else {
      throw ConfigError("train.recon must be \"nll\" or \"l3\"");
    }
  }
  if (j.contains("decode")) {
    const auto& s = j.at("decode");
    check_keys(s, "decode", {"topk", "insert", "delete", "max_insert"});
    read(s, "topk", c.decode.topk, "decode");
    read(s, "insert", c.decode.flags.insert, "decode");
    read(s, "delete", c.decode.flags.del, "decode");
    read(s, "max_insert", c.decode.flags.max_insert, "decode");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  json g = grammar;
  j["corpus"] = {{"seed", corpus_seed}, {"grammar", g}};
  j["model"] = {{"dim", model.dim},
                {"layers", model.layers},
                {"heads", model.heads},
                {"ff_dim", model.ff_dim},
                {"max_len", model.max_len},
                {"init_std", model.init_std},
                {"style_init_std", model.style_init_std},
                {"ln_eps", model.ln_eps}};
  const auto& t = train;
  j["train"] = {{"lr", t.lr},
                {"q_lr", t.q_lr},
                {"batch", t.batch},
                {"steps", t.steps},
                {"weight_decay", t.weight_decay},
                {"beta", t.weights.beta},
                {"w_r", t.weights.w_r},
                {"w_ins", t.weights.w_ins},
                {"topk", t.topk},
                {"seed", t.seed},
                {"eval_interval", t.eval_interval},
                {"mask_lambda", t.mask_lambda},
                {"uniform_mask_prob", t.uniform_mask_prob},
                {"gap_prob", t.gap_prob},
                {"deletion_prob", t.deletion_prob},
                {"max_gap", t.max_gap},
                {"club_all_positions", t.club_all_positions},
                {"recon", t.recon == ReconMode::kNll ? "nll" : "l3"}};
  j["decode"] = {{"topk", decode.topk},
                 {"insert", decode.flags.insert},
                 {"delete", decode.flags.del},
                 {"max_insert", decode.flags.max_insert}};
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace rlm
