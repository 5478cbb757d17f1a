#include "rlm/model.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace rlm {

void ModelConfig::validate() const {
  if (dim < 2) throw std::invalid_argument("model dim must be >= 2");
  if (layers < 1) throw std::invalid_argument("model needs at least one layer");
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("attention heads must divide dim");
  }
  if (ff_dim < 1) throw std::invalid_argument("ff_dim must be positive");
  if (max_len < 4) throw std::invalid_argument("max_len must be >= 4");
  if (vocab_size <= Vocab::kReservedCount) {
    throw std::invalid_argument("vocab must contain ordinary words");
  }
  if (styles < 1) throw std::invalid_argument("need at least one style");
}

namespace {

void add_linear(ParameterSet& ps, const std::string& name, std::size_t in,
                std::size_t out) {
  ps.add(name + ".w", Tensor::matrix(in, out));
  ps.add(name + ".b", Tensor::matrix(1, out));
}

// Keys carry no bias: it would shift every score of a query equally and
// cancel in the softmax.
void add_attention(ParameterSet& ps, const std::string& name, std::size_t d,
                   bool out_proj) {
  add_linear(ps, name + ".q", d, d);
  ps.add(name + ".k.w", Tensor::matrix(d, d));
  add_linear(ps, name + ".v", d, d);
  if (out_proj) add_linear(ps, name + ".o", d, d);
}

void add_norm(ParameterSet& ps, const std::string& name, std::size_t d) {
  ps.add(name + ".g", Tensor::matrix(1, d, 1.0));
  ps.add(name + ".b", Tensor::matrix(1, d));
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() &&
         s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

ParameterSet RlmModel::layout(const ModelConfig& c) {
  c.validate();
  ParameterSet ps;
  const std::size_t d = c.dim;
  ps.add("tok_emb", Tensor::matrix(c.vocab_size, d));
  ps.add("pos_emb", Tensor::matrix(c.max_len, d));
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    add_norm(ps, p + ".ln1", d);
    add_attention(ps, p + ".attn", d, true);
    add_norm(ps, p + ".ln2", d);
    add_linear(ps, p + ".ff1", d, c.ff_dim);
    add_linear(ps, p + ".ff2", c.ff_dim, d);
  }
  add_norm(ps, "enc.lnf", d);
  add_attention(ps, "content.attn", d, true);
  add_norm(ps, "content.ln", d);
  ps.add("style", Tensor::matrix(c.styles, d));
  add_linear(ps, "fuse.proj", 2 * d, d);
  add_attention(ps, "fuse.attn", d, false);
  add_norm(ps, "fuse.ln", d);
  add_linear(ps, "pred", d, c.vocab_size);
  add_linear(ps, "recon", d, c.vocab_size);
  add_linear(ps, "insert", d, 2);
  return ps;
}

RlmModel::RlmModel(ModelConfig config, std::uint64_t seed)
    : config_(config), params_(layout(config)) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    if (p.name == "style") {
      fill_normal(p.value, config_.style_init_std, rng);
    } else if (p.name == "tok_emb" || p.name == "pos_emb" || ends_with(p.name, ".w")) {
      fill_normal(p.value, config_.init_std, rng);
    }
  }
}

RlmModel::RlmModel(ModelConfig config, ParameterSet params)
    : config_(config), params_(std::move(params)) {
  const ParameterSet expected = layout(config_);
  if (expected.size() != params_.size()) {
    throw std::invalid_argument("parameter count " + std::to_string(params_.size()) +
                                " does not match config (" +
                                std::to_string(expected.size()) + ")");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != params_[i].name ||
        expected[i].value.shape() != params_[i].value.shape()) {
      throw std::invalid_argument(
          "parameter mismatch at " + std::to_string(i) + ": expected " +
          expected[i].name + expected[i].value.shape_string() + ", got " +
          params_[i].name + params_[i].value.shape_string());
    }
  }
}

void RlmModel::check_length(std::size_t len) const {
  if (len > config_.max_len) {
    throw std::length_error("input of length " + std::to_string(len) +
                            " exceeds max_len " + std::to_string(config_.max_len));
  }
}

Var RlmModel::self_attention(Binder& bind, const std::string& prefix, Var x,
                             std::size_t heads) const {
  Graph& g = bind.graph();
  Var q = ad::linear(g, x, bind(prefix + ".q.w"), bind(prefix + ".q.b"));
  Var k = ad::matmul(g, x, bind(prefix + ".k.w"));
  Var v = ad::linear(g, x, bind(prefix + ".v.w"), bind(prefix + ".v.b"));
  Var a = ad::attention(g, q, k, v, heads);
  if (params_.contains(prefix + ".o.w")) {
    a = ad::linear(g, a, bind(prefix + ".o.w"), bind(prefix + ".o.b"));
  }
  return a;
}

RlmModel::Encoded RlmModel::encode(Binder& bind, std::span<const TokenId> ids) const {
  check_length(ids.size());
  Encoded out;
  std::size_t masks = 0;
  std::vector<std::size_t> idx(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= config_.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(ids[i]) + " outside vocab");
    }
    if (ids[i] == Vocab::kMask) {
      out.mask_pos = i;
      ++masks;
    }
    idx[i] = ids[i];
  }
  if (masks != 1) throw std::invalid_argument("encoder input needs exactly one [MASK]");

  Graph& g = bind.graph();
  const double eps = config_.ln_eps;
  Var x = ad::add(g, ad::gather_rows(g, bind("tok_emb"), idx),
                  ad::slice_rows(g, bind("pos_emb"), 0, ids.size()));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    Var a = ad::layer_norm(g, x, bind(p + ".ln1.g"), bind(p + ".ln1.b"), eps);
    x = ad::add(g, x, self_attention(bind, p + ".attn", a, config_.heads));
    Var b = ad::layer_norm(g, x, bind(p + ".ln2.g"), bind(p + ".ln2.b"), eps);
    Var hidden = ad::gelu(g, ad::linear(g, b, bind(p + ".ff1.w"), bind(p + ".ff1.b")));
    x = ad::add(g, x, ad::linear(g, hidden, bind(p + ".ff2.w"), bind(p + ".ff2.b")));
  }
  Var h = ad::layer_norm(g, x, bind("enc.lnf.g"), bind("enc.lnf.b"), eps);
  Var att = self_attention(bind, "content.attn", h, 1);
  out.contents = ad::layer_norm(g, ad::add(g, h, att), bind("content.ln.g"),
                                bind("content.ln.b"), eps);
  return out;
}

Var RlmModel::fuse(Binder& bind, StyleId style, Var contents, std::size_t pos) const {
  if (style >= config_.styles) {
    throw std::out_of_range("style id " + std::to_string(style) + " outside style table");
  }
  Graph& g = bind.graph();
  const std::size_t len = g.value(contents).rows();
  if (len == 0) throw std::invalid_argument("fuse needs at least one content embedding");
  if (pos >= len) throw std::out_of_range("fuse position outside sequence");
  Var s = ad::broadcast_rows(g, ad::slice_rows(g, bind("style"), style, 1), len);
  Var z = ad::linear(g, ad::concat_cols(g, s, contents), bind("fuse.proj.w"),
                     bind("fuse.proj.b"));
  Var a = self_attention(bind, "fuse.attn", z, 1);
  Var e = ad::layer_norm(g, ad::add(g, contents, a), bind("fuse.ln.g"),
                         bind("fuse.ln.b"), config_.ln_eps);
  return ad::row(g, e, pos);
}

Var RlmModel::prediction_logits(Binder& bind, Var fused) const {
  return ad::linear(bind.graph(), fused, bind("pred.w"), bind("pred.b"));
}

Var RlmModel::reconstruction_logits(Binder& bind, Var content) const {
  return ad::linear(bind.graph(), content, bind("recon.w"), bind("recon.b"));
}

Var RlmModel::insertion_logits(Binder& bind, Var fused) const {
  return ad::linear(bind.graph(), fused, bind("insert.w"), bind("insert.b"));
}

std::vector<ContentEmbedding> RlmModel::encode_content_sequence(
    std::span<const TokenId> prefix, std::span<const TokenId> suffix,
    std::size_t* mask_index) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  const auto ids = assemble_prediction_input(prefix, suffix);
  const auto enc = encode(bind, ids);
  const Tensor& c = g.value(enc.contents);
  std::vector<ContentEmbedding> out;
  for (std::size_t r = 0; r < c.rows(); ++r) {
    auto row = c.row_span(r);
    out.push_back({std::vector<double>(row.begin(), row.end()), r});
  }
  if (mask_index != nullptr) *mask_index = enc.mask_pos;
  return out;
}

ContentEmbedding RlmModel::encode_content(std::span<const TokenId> prefix,
                                          std::span<const TokenId> suffix) const {
  std::size_t mask = 0;
  auto all = encode_content_sequence(prefix, suffix, &mask);
  return all[mask];
}

ContentEmbedding RlmModel::encode_reconstruction(
    std::span<const TokenId> span, std::span<const TokenId> x_prefix,
    std::span<const TokenId> x_suffix) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  const auto ids = assemble_reconstruction_input(span, x_prefix, x_suffix);
  const auto enc = encode(bind, ids);
  auto row = g.value(enc.contents).row_span(enc.mask_pos);
  return {std::vector<double>(row.begin(), row.end()), enc.mask_pos};
}

FusedEmbedding RlmModel::fuse(StyleId style,
                              const std::vector<ContentEmbedding>& contents,
                              std::size_t i) const {
  if (contents.empty()) throw std::invalid_argument("fuse needs at least one content embedding");
  Tensor c = Tensor::matrix(contents.size(), config_.dim);
  for (std::size_t r = 0; r < contents.size(); ++r) {
    if (contents[r].values.size() != config_.dim) {
      throw std::invalid_argument("content embedding has wrong dimension");
    }
    for (std::size_t j = 0; j < config_.dim; ++j) c.at(r, j) = contents[r].values[j];
  }
  Graph g(false);
  Binder bind(g, params_, nullptr);
  Var e = fuse(bind, style, g.constant(std::move(c)), i);
  return {g.value(e).storage()};
}

std::vector<double> RlmModel::predict_token(const FusedEmbedding& e) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  Var x = g.constant(Tensor::row(e.values));
  return softmax(g.value(prediction_logits(bind, x)).data());
}

std::vector<double> RlmModel::reconstruct_token(const ContentEmbedding& c_prime) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  Var x = g.constant(Tensor::row(c_prime.values));
  return softmax(g.value(reconstruction_logits(bind, x)).data());
}

std::array<double, 2> RlmModel::insert_decision(const FusedEmbedding& e) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  Var x = g.constant(Tensor::row(e.values));
  const auto p = softmax(g.value(insertion_logits(bind, x)).data());
  return {p[0], p[1]};
}

PredictionOutput RlmModel::predict(std::span<const TokenId> prefix,
                                   std::span<const TokenId> suffix,
                                   StyleId style) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  const auto ids = assemble_prediction_input(prefix, suffix);
  const auto enc = encode(bind, ids);
  Var e = fuse(bind, style, enc.contents, enc.mask_pos);
  PredictionOutput out;
  out.token_probs = softmax(g.value(prediction_logits(bind, e)).data());
  const auto ins = softmax(g.value(insertion_logits(bind, e)).data());
  out.insert_probs = {ins[0], ins[1]};
  return out;
}

std::vector<double> RlmModel::reconstruct(std::span<const TokenId> span,
                                          std::span<const TokenId> x_prefix,
                                          std::span<const TokenId> x_suffix) const {
  Graph g(false);
  Binder bind(g, params_, nullptr);
  const auto ids = assemble_reconstruction_input(span, x_prefix, x_suffix);
  const auto enc = encode(bind, ids);
  Var c = ad::row(g, enc.contents, enc.mask_pos);
  return softmax(g.value(reconstruction_logits(bind, c)).data());
}

}  // namespace rlm
