#include "rlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rlm {

namespace {

Words split(const std::string& s) {
  std::istringstream is(s);
  Words out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

bool is_slot(const std::string& t) {
  return t == "NOUN" || t == "NOUN2" || t == "ADJ" || t == "ADJ2" || t == "INT" ||
         t == "INT2" || t == "COP" || t == "NUM";
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

// A drawn sentence before styling: slot choices shared by every rendering.
struct Draw {
  std::size_t tmpl = 0;
  std::size_t noun = 0;
  std::size_t noun2 = 0;
  std::string cop;
  std::string num;
  std::map<std::string, std::string> fill;
  // Intensifier per clause: -1 none, else index into the style's list.
  int int1 = -1;
  int int2 = -1;
};

// Renders a draw in `style`; `ints` overrides the intensifier choices.
Words render(const GrammarConfig& g, const Draw& d, StyleId style, int int1, int int2) {
  Words out;
  for (const auto& tok : split(g.templates[d.tmpl])) {
    if (tok == "NOUN") {
      out.push_back(g.nouns[d.noun].noun);
    } else if (tok == "NOUN2") {
      out.push_back(g.nouns[d.noun2].noun);
    } else if (tok == "ADJ") {
      out.push_back(g.nouns[d.noun].adjectives[style]);
    } else if (tok == "ADJ2") {
      out.push_back(g.nouns[d.noun2].adjectives[style]);
    } else if (tok == "INT") {
      if (int1 >= 0) out.push_back(g.intensifiers[style][static_cast<std::size_t>(int1)]);
    } else if (tok == "INT2") {
      if (int2 >= 0) out.push_back(g.intensifiers[style][static_cast<std::size_t>(int2)]);
    } else if (tok == "COP") {
      out.push_back(d.cop);
    } else if (tok == "NUM") {
      out.push_back(d.num);
    } else if (auto it = d.fill.find(tok); it != d.fill.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

Draw draw(const GrammarConfig& g, StyleId style, std::mt19937_64& rng) {
  Draw d;
  std::discrete_distribution<std::size_t> tmpl(g.template_weights.begin(),
                                                g.template_weights.end());
  d.tmpl = tmpl(rng);
  std::uniform_int_distribution<std::size_t> noun(0, g.nouns.size() - 1);
  d.noun = noun(rng);
  do {
    d.noun2 = noun(rng);
  } while (g.nouns.size() > 1 && d.noun2 == d.noun);
  d.cop = pick(g.copulas, rng);
  d.num = g.numbers.empty() ? std::string() : pick(g.numbers, rng);
  for (const auto& [key, words] : g.fillers) d.fill[key] = pick(words, rng);
  std::bernoulli_distribution use_int(g.intensifier_prob);
  const auto& ints = g.intensifiers[style];
  std::uniform_int_distribution<int> which(0, static_cast<int>(ints.size()) - 1);
  if (!ints.empty() && use_int(rng)) d.int1 = which(rng);
  if (!ints.empty() && use_int(rng)) d.int2 = which(rng);
  return d;
}

bool has_slot(const GrammarConfig& g, const Draw& d, const char* slot) {
  for (const auto& t : split(g.templates[d.tmpl])) {
    if (t == slot) return true;
  }
  return false;
}

// Gold rewrites: the adjective swapped, source intensifiers dropped; plus one
// variant per target intensifier, placed where the source had one (or in the
// first clause when it had none).
std::vector<Words> gold_rewrites(const GrammarConfig& g, const Draw& d, StyleId target) {
  std::vector<Words> refs{render(g, d, target, -1, -1)};
  const bool two = has_slot(g, d, "INT2");
  for (std::size_t w = 0; w < g.intensifiers[target].size(); ++w) {
    const int wi = static_cast<int>(w);
    int a = d.int1 >= 0 ? wi : -1;
    int b = two && d.int2 >= 0 ? wi : -1;
    if (a < 0 && b < 0) a = wi;
    auto r = render(g, d, target, a, b);
    if (std::find(refs.begin(), refs.end(), r) == refs.end()) refs.push_back(std::move(r));
  }
  return refs;
}

nlohmann::json words_json(const Words& w) { return nlohmann::json(w); }

}  // namespace

GrammarConfig GrammarConfig::defaults() {
  GrammarConfig g;
  g.nouns = {
      {"food", {"great", "bad"}},        {"service", {"friendly", "rude"}},
      {"staff", {"helpful", "lazy"}},    {"pizza", {"tasty", "bland"}},
      {"room", {"clean", "dirty"}},      {"price", {"fair", "steep"}},
      {"coffee", {"fresh", "stale"}},    {"music", {"lovely", "loud"}},
      {"beer", {"cold", "warm"}},        {"patio", {"cozy", "cramped"}},
      {"wait", {"short", "long"}},       {"soup", {"delicious", "salty"}},
  };
  g.intensifiers = {{"really", "truly"}, {"so", "too"}};
  g.templates = {
      "the NOUN COP INT ADJ .",
      "we went there on DAY and the NOUN COP INT ADJ .",
      "i paid NUM dollars and the NOUN COP INT ADJ .",
      "my PERSON said that the NOUN COP INT ADJ .",
      "the NOUN COP INT ADJ and the NOUN2 COP INT2 ADJ2 .",
      "after NUM minutes at our table the NOUN COP INT ADJ .",
      "overall the NOUN at this place COP INT ADJ .",
  };
  g.template_weights = {1, 2, 2, 2, 2, 2, 2};
  g.fillers = {{"DAY", {"monday", "friday", "sunday"}},
               {"PERSON", {"friend", "sister", "boss"}}};
  g.copulas = {"was", "is"};
  g.numbers = {"10", "15", "20", "30", "45"};
  return g;
}

std::vector<StyleLexicon> GrammarConfig::lexicons() const {
  std::vector<StyleLexicon> out;
  for (std::size_t s = 0; s < styles.size(); ++s) {
    StyleLexicon lex;
    lex.style = styles[s];
    for (const auto& n : nouns) lex.markers.push_back(n.adjectives[s]);
    lex.intensifiers = intensifiers[s];
    lex.markers.insert(lex.markers.end(), lex.intensifiers.begin(), lex.intensifiers.end());
    out.push_back(std::move(lex));
  }
  return out;
}

StyleId GrammarConfig::style_id(const std::string& name) const {
  for (std::size_t s = 0; s < styles.size(); ++s) {
    if (styles[s] == name) return static_cast<StyleId>(s);
  }
  throw std::invalid_argument("unknown style '" + name + "'");
}

void GrammarConfig::validate() const {
  if (styles.size() < 2) throw std::invalid_argument("grammar needs at least two styles");
  if (nouns.empty()) throw std::invalid_argument("grammar has an empty noun lexicon");
  if (templates.empty()) throw std::invalid_argument("grammar has no templates");
  if (template_weights.size() != templates.size()) {
    throw std::invalid_argument("template_weights must match templates");
  }
  if (copulas.empty()) throw std::invalid_argument("grammar has no copulas");
  if (intensifiers.size() != styles.size()) {
    throw std::invalid_argument("intensifiers must list one set per style");
  }
  if (intensifier_prob < 0.0 || intensifier_prob > 1.0) {
    throw std::invalid_argument("intensifier_prob must lie in [0, 1]");
  }
  for (const auto& n : nouns) {
    if (n.adjectives.size() != styles.size()) {
      throw std::invalid_argument("noun '" + n.noun + "' needs one adjective per style");
    }
  }
  std::map<std::string, std::size_t> owner;
  const auto lexs = lexicons();
  for (std::size_t s = 0; s < lexs.size(); ++s) {
    for (const auto& m : lexs[s].markers) {
      if (!owner.emplace(m, s).second) throw std::invalid_argument("marker '" + m + "' is not unique to one style");
    }
  }
  std::set<std::string> scaffold;
  for (const auto& t : templates) {
    const auto toks = split(t);
    std::size_t len = 0;
    bool uses_num = false;
    for (const auto& w : toks) {
      if (w == "NUM") uses_num = true;
      if (w == "INT" || w == "INT2" || w == "NUM" || is_slot(w) || fillers.contains(w)) {
        ++len;
        continue;
      }
      if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isupper(c); })) {
        throw std::invalid_argument("template slot '" + w + "' has no fillers");
      }
      scaffold.insert(w);
      ++len;
    }
    if (uses_num && numbers.empty()) throw std::invalid_argument("template uses NUM but no numbers");
    if (len > max_len) {
      throw std::invalid_argument("template longer than max_len: " + t);
    }
  }
  for (const auto& n : nouns) scaffold.insert(n.noun);
  for (const auto& c : copulas) scaffold.insert(c);
  for (const auto& [k, ws] : fillers) {
    if (ws.empty()) throw std::invalid_argument("filler '" + k + "' is empty");
    scaffold.insert(ws.begin(), ws.end());
  }
  for (const auto& [m, s] : owner) {
    if (scaffold.contains(m)) throw std::invalid_argument("marker '" + m + "' is also a scaffold word");
  }
  const std::size_t vocab = scaffold.size() + owner.size() + numbers.size();
  if (vocab > 512) throw std::invalid_argument("grammar vocabulary exceeds 512 words");
}

void to_json(nlohmann::json& j, const GrammarConfig& g) {
  nlohmann::json nouns = nlohmann::json::array();
  for (const auto& n : g.nouns) nouns.push_back({{"noun", n.noun}, {"adjectives", n.adjectives}});
  j = nlohmann::json{{"styles", g.styles},
                     {"nouns", nouns},
                     {"intensifiers", g.intensifiers},
                     {"templates", g.templates},
                     {"template_weights", g.template_weights},
                     {"fillers", g.fillers},
                     {"copulas", g.copulas},
                     {"numbers", g.numbers},
                     {"intensifier_prob", g.intensifier_prob},
                     {"train_per_style", g.train_per_style},
                     {"eval_per_style", g.eval_per_style},
                     {"max_len", g.max_len}};
}

void from_json(const nlohmann::json& j, GrammarConfig& g) {
  g = GrammarConfig::defaults();
  if (j.contains("nouns")) {
    g.nouns.clear();
    for (const auto& n : j.at("nouns")) {
      g.nouns.push_back({n.at("noun").get<std::string>(),
                         n.at("adjectives").get<std::vector<std::string>>()});
    }
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("styles", g.styles);
  opt("intensifiers", g.intensifiers);
  opt("templates", g.templates);
  opt("template_weights", g.template_weights);
  opt("fillers", g.fillers);
  opt("copulas", g.copulas);
  opt("numbers", g.numbers);
  opt("intensifier_prob", g.intensifier_prob);
  opt("train_per_style", g.train_per_style);
  opt("eval_per_style", g.eval_per_style);
  opt("max_len", g.max_len);
  if (j.contains("templates") && !j.contains("template_weights")) {
    g.template_weights.assign(g.templates.size(), 1.0);
  }
}

Corpus generate_corpus(const GrammarConfig& g, std::uint64_t seed) {
  g.validate();
  std::mt19937_64 rng(seed);
  Corpus c;
  c.styles = g.styles;

  std::set<Words> held_out;
  for (std::size_t s = 0; s < g.styles.size(); ++s) {
    for (std::size_t n = 0; n < g.eval_per_style; ++n) {
      const StyleId style = static_cast<StyleId>(s);
      Draw d = draw(g, style, rng);
      ParallelPair p;
      p.source = render(g, d, style, d.int1, d.int2);
      p.style = style;
      held_out.insert(p.source);
      for (std::size_t t = 0; t < g.styles.size(); ++t) {
        if (t == s) continue;
        auto refs = gold_rewrites(g, d, static_cast<StyleId>(t));
        held_out.insert(refs.begin(), refs.end());
        p.refs[static_cast<StyleId>(t)] = std::move(refs);
      }
      c.eval.push_back(std::move(p));
    }
  }

  const std::size_t budget = 1000 * (g.train_per_style + 1);
  for (std::size_t s = 0; s < g.styles.size(); ++s) {
    std::size_t made = 0, tries = 0;
    while (made < g.train_per_style) {
      if (++tries > budget) {
        throw std::invalid_argument("grammar too small for the requested train split");
      }
      const StyleId style = static_cast<StyleId>(s);
      Draw d = draw(g, style, rng);
      Words w = render(g, d, style, d.int1, d.int2);
      if (held_out.contains(w)) continue;
      c.train.push_back({std::move(w), style});
      ++made;
    }
  }
  // Interleave styles so file order does not group them.
  std::shuffle(c.train.begin(), c.train.end(), rng);
  return c;
}

Vocab Corpus::build_vocab() const {
  Vocab v;
  for (const auto& s : train) {
    for (const auto& w : s.tokens) v.add(w);
  }
  for (const auto& p : eval) {
    for (const auto& w : p.source) v.add(w);
    for (const auto& [style, refs] : p.refs) {
      for (const auto& r : refs) {
        for (const auto& w : r) v.add(w);
      }
    }
  }
  return v;
}

std::string train_jsonl(const Corpus& c) {
  std::string out;
  for (const auto& s : c.train) {
    nlohmann::ordered_json j;
    j["tokens"] = words_json(s.tokens);
    j["style"] = c.styles.at(s.style);
    out += j.dump() + "\n";
  }
  return out;
}

std::string eval_jsonl(const Corpus& c) {
  std::string out;
  for (const auto& p : c.eval) {
    nlohmann::ordered_json j;
    j["tokens"] = words_json(p.source);
    j["style"] = c.styles.at(p.style);
    nlohmann::ordered_json refs = nlohmann::ordered_json::object();
    for (const auto& [style, rs] : p.refs) refs[c.styles.at(style)] = rs;
    j["refs"] = refs;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

StyleId lookup_style(const std::vector<std::string>& styles, const std::string& name,
                     const std::string& where) {
  for (std::size_t s = 0; s < styles.size(); ++s) {
    if (styles[s] == name) return static_cast<StyleId>(s);
  }
  throw std::runtime_error(where + ": unknown style '" + name + "'");
}

template <typename Fn>
void for_each_record(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) throw std::runtime_error(path + ":" + std::to_string(n) + ": blank line");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
    fn(j, path + ":" + std::to_string(n));
  }
}

}  // namespace

Corpus read_corpus(const std::string& train_path, const std::string& eval_path,
                   const std::vector<std::string>& styles) {
  Corpus c;
  c.styles = styles;
  if (!train_path.empty()) {
    for_each_record(train_path, [&](const nlohmann::json& j, const std::string& where) {
      Sentence s;
      s.tokens = j.at("tokens").get<Words>();
      s.style = lookup_style(styles, j.at("style").get<std::string>(), where);
      if (s.tokens.empty()) throw std::runtime_error(where + ": empty sentence");
      c.train.push_back(std::move(s));
    });
  }
  if (!eval_path.empty()) {
    for_each_record(eval_path, [&](const nlohmann::json& j, const std::string& where) {
      ParallelPair p;
      p.source = j.at("tokens").get<Words>();
      p.style = lookup_style(styles, j.at("style").get<std::string>(), where);
      if (!j.contains("refs")) throw std::runtime_error(where + ": eval record lacks refs");
      for (const auto& [name, refs] : j.at("refs").items()) {
        p.refs[lookup_style(styles, name, where)] = refs.get<std::vector<Words>>();
      }
      c.eval.push_back(std::move(p));
    });
  }
  return c;
}

void write_corpus(const Corpus& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, body] : {std::pair{std::string("train.jsonl"), train_jsonl(c)},
                                   std::pair{std::string("eval.jsonl"), eval_jsonl(c)}}) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
    out << body;
  }
}

LeakageReport check_leakage(const Corpus& c) {
  std::set<Words> train;
  for (const auto& s : c.train) train.insert(s.tokens);
  LeakageReport r;
  for (const auto& p : c.eval) {
    for (const auto& [style, refs] : p.refs) {
      for (const auto& ref : refs) {
        ++r.references;
        if (train.contains(ref)) ++r.leaked;
      }
    }
  }
  return r;
}

SalienceTable::SalienceTable(const std::vector<Sentence>& train, std::size_t styles,
                             double epsilon)
    : styles_(styles), epsilon_(epsilon) {
  for (const auto& s : train) {
    if (s.style >= styles) throw std::out_of_range("sentence style outside style count");
    for (const auto& w : s.tokens) {
      auto& row = counts_[w];
      if (row.empty()) row.assign(styles, 0.0);
      row[s.style] += 1.0;
    }
  }
}

SalienceTable::SalienceTable(std::map<std::string, std::vector<double>> counts,
                             std::size_t styles, double epsilon)
    : counts_(std::move(counts)), styles_(styles), epsilon_(epsilon) {
  for (const auto& [w, row] : counts_) {
    if (row.size() != styles) throw std::invalid_argument("count row for '" + w + "' has wrong size");
  }
}

double SalienceTable::salience(const std::string& word) const {
  auto it = counts_.find(word);
  if (it == counts_.end()) return 1.0;
  double best = 0.0;
  for (std::size_t a = 0; a < styles_; ++a) {
    for (std::size_t b = 0; b < styles_; ++b) {
      if (a == b) continue;
      best = std::max(best, (it->second[a] + epsilon_) / (it->second[b] + epsilon_));
    }
  }
  return best;
}

const std::set<std::string>& default_skip_list() {
  // Pronouns, determiners, auxiliaries and punctuation. Version 1.
  static const std::set<std::string> list{
      "i",    "me",   "my",    "we",   "us",   "our",  "you",   "your", "he",
      "him",  "his",  "she",   "her",  "it",   "its",  "they",  "them", "their",
      "this", "that", "these", "those", "the", "a",    "an",    "and",  "or",
      "but",  "was",  "is",    "are",  "were", "be",   "been",  "of",   "to",
      "in",   "on",   "at",    "for",  "with", ".",    ",",     "!",    "?"};
  return list;
}

bool is_number(const std::string& word) {
  return !word.empty() &&
         std::all_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool MaskPolicy::maskable(const std::string& word) const {
  if (is_number(word) || skip.contains(word)) return false;
  if (salience == nullptr) return true;
  return salience->salience(word) >= lambda;
}

std::optional<MaskedSample> make_masked_sample(const Words& sentence, StyleId style,
                                               const Vocab& vocab, std::mt19937_64& rng,
                                               const MaskPolicy& policy) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (policy.maskable(sentence[i])) candidates.push_back(i);
  }
  std::bernoulli_distribution uniform(policy.uniform_prob);
  if (policy.uniform_prob > 0.0 && uniform(rng)) {
    candidates.clear();
    for (std::size_t i = 0; i < sentence.size(); ++i) candidates.push_back(i);
  }
  if (candidates.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> d(0, candidates.size() - 1);
  const std::size_t i = candidates[d(rng)];

  const TokenSeq ids = vocab.encode(sentence);
  MaskedSample m;
  m.position = i;
  m.style = style;
  m.target = ids[i];
  m.prefix.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i));
  m.suffix.assign(ids.begin() + static_cast<std::ptrdiff_t>(i) + 1, ids.end());
  m.prediction_input.push_back(Vocab::kBos);
  m.prediction_input.insert(m.prediction_input.end(), m.prefix.begin(), m.prefix.end());
  m.prediction_input.push_back(Vocab::kMask);
  m.prediction_input.insert(m.prediction_input.end(), m.suffix.begin(), m.suffix.end());
  m.prediction_input.push_back(Vocab::kEos);
  m.reconstruction_input.push_back(m.target);
  m.reconstruction_input.insert(m.reconstruction_input.end(), m.prediction_input.begin(),
                                m.prediction_input.end());
  return m;
}

TokenId gap_label(std::size_t width) {
  if (width == 0) throw std::invalid_argument("gap width must be >= 1");
  return width >= 2 ? Vocab::kMask : Vocab::kPad;
}

GapSample make_gap_sample(const TokenSeq& sentence, StyleId style, std::mt19937_64& rng,
                          std::size_t max_gap) {
  if (max_gap == 0) throw std::invalid_argument("max_gap must be >= 1");
  if (sentence.size() <= max_gap) {
    throw std::invalid_argument("gap sample needs a sentence longer than max_gap");
  }
  std::uniform_int_distribution<std::size_t> width(1, max_gap);
  GapSample g;
  g.width = width(rng);
  std::uniform_int_distribution<std::size_t> start(0, sentence.size() - g.width);
  g.position = start(rng);
  g.style = style;
  g.label = gap_label(g.width);
  g.prefix.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(g.position));
  g.suffix.assign(sentence.begin() + static_cast<std::ptrdiff_t>(g.position + g.width),
                  sentence.end());
  g.input.push_back(Vocab::kBos);
  g.input.insert(g.input.end(), g.prefix.begin(), g.prefix.end());
  g.input.push_back(Vocab::kMask);
  g.input.insert(g.input.end(), g.suffix.begin(), g.suffix.end());
  g.input.push_back(Vocab::kEos);
  return g;
}

DeletionSample make_deletion_sample(const TokenSeq& sentence, StyleId style,
                                    std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> at(0, sentence.size());
  const std::size_t j = at(rng);
  DeletionSample d;
  d.style = style;
  d.prefix.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(j));
  d.suffix.assign(sentence.begin() + static_cast<std::ptrdiff_t>(j), sentence.end());
  return d;
}

Batching batch_by_length(const std::vector<std::size_t>& lengths, std::size_t batch_size,
                         std::mt19937_64& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  Batching out;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    const std::size_t e = std::min(order.size(), b + batch_size);
    out.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                             order.begin() + static_cast<std::ptrdiff_t>(e));
    out.max_spread = std::max(out.max_spread, lengths[order[e - 1]] - lengths[order[b]]);
  }
  std::shuffle(out.batches.begin(), out.batches.end(), rng);
  return out;
}

}  // namespace rlm
