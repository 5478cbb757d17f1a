#include "rlm/scoring.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rlm {

TokenSeq assemble_prediction_input(std::span<const TokenId> prefix,
                                   std::span<const TokenId> suffix) {
  TokenSeq ids;
  ids.reserve(prefix.size() + suffix.size() + 3);
  ids.push_back(Vocab::kBos);
  ids.insert(ids.end(), prefix.begin(), prefix.end());
  ids.push_back(Vocab::kMask);
  ids.insert(ids.end(), suffix.begin(), suffix.end());
  ids.push_back(Vocab::kEos);
  return ids;
}

TokenSeq assemble_reconstruction_input(std::span<const TokenId> span,
                                       std::span<const TokenId> x_prefix,
                                       std::span<const TokenId> x_suffix) {
  TokenSeq ids(span.begin(), span.end());
  const auto rest = assemble_prediction_input(x_prefix, x_suffix);
  ids.insert(ids.end(), rest.begin(), rest.end());
  return ids;
}

std::vector<double> uniform_dist(std::size_t size) {
  if (size == 0) throw std::invalid_argument("empty distribution");
  return std::vector<double>(size, 1.0 / static_cast<double>(size));
}

std::vector<double> peaked_dist(std::size_t size, TokenId id, double mass) {
  if (id >= size) throw std::out_of_range("peak id outside distribution");
  if (mass < 0.0 || mass > 1.0) throw std::invalid_argument("mass must lie in [0, 1]");
  if (size == 1) return {1.0};
  std::vector<double> d(size, (1.0 - mass) / static_cast<double>(size - 1));
  d[id] = mass;
  return d;
}

StubModel::StubModel(std::size_t vocab_size)
    : vocab_size_(vocab_size),
      default_reconstruction_(uniform_dist(vocab_size)) {
  default_prediction_.token_probs = uniform_dist(vocab_size);
}

void StubModel::check_row(std::span<const double> row) const {
  if (row.size() != vocab_size_) {
    throw std::invalid_argument("stub row has " + std::to_string(row.size()) +
                                " entries, expected " + std::to_string(vocab_size_));
  }
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw std::invalid_argument("stub row has a negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("stub row is not normalized");
}

void StubModel::set_default_prediction(PredictionOutput out) {
  check_row(out.token_probs);
  if (std::abs(out.insert_probs[0] + out.insert_probs[1] - 1.0) > 1e-9) {
    throw std::invalid_argument("stub insert row is not normalized");
  }
  default_prediction_ = std::move(out);
}

void StubModel::set_default_reconstruction(std::vector<double> dist) {
  check_row(dist);
  default_reconstruction_ = std::move(dist);
}

void StubModel::set_prediction(std::span<const TokenId> prefix,
                               std::span<const TokenId> suffix, StyleId style,
                               PredictionOutput out) {
  check_row(out.token_probs);
  if (std::abs(out.insert_probs[0] + out.insert_probs[1] - 1.0) > 1e-9) {
    throw std::invalid_argument("stub insert row is not normalized");
  }
  predictions_[{assemble_prediction_input(prefix, suffix), style}] = std::move(out);
}

void StubModel::set_reconstruction(std::span<const TokenId> span,
                                   std::span<const TokenId> x_prefix,
                                   std::span<const TokenId> x_suffix,
                                   std::vector<double> dist) {
  check_row(dist);
  reconstructions_[assemble_reconstruction_input(span, x_prefix, x_suffix)] =
      std::move(dist);
}

PredictionOutput StubModel::predict(std::span<const TokenId> prefix,
                                    std::span<const TokenId> suffix,
                                    StyleId style) const {
  auto it = predictions_.find({assemble_prediction_input(prefix, suffix), style});
  return it != predictions_.end() ? it->second : default_prediction_;
}

std::vector<double> StubModel::reconstruct(std::span<const TokenId> span,
                                           std::span<const TokenId> x_prefix,
                                           std::span<const TokenId> x_suffix) const {
  auto it = reconstructions_.find(assemble_reconstruction_input(span, x_prefix, x_suffix));
  return it != reconstructions_.end() ? it->second : default_reconstruction_;
}

}  // namespace rlm
