#include "rlm/vocab.hpp"

#include <stdexcept>

namespace rlm {

Vocab::Vocab() {
  for (const char* w : {"[PAD]", "[MASK]", "[BOS]", "[EOS]"}) add(w);
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
  for (const auto& w : words) add(w);
}

TokenId Vocab::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

TokenId Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw std::out_of_range("unknown token '" + word + "'");
  return it->second;
}

bool Vocab::contains(const std::string& word) const {
  return index_.contains(word);
}

const std::string& Vocab::word(TokenId id) const {
  if (id >= words_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocab");
  }
  return words_[id];
}

TokenSeq Vocab::encode(const std::vector<std::string>& words) const {
  TokenSeq out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(word(id));
  return out;
}

}  // namespace rlm
