#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rlm {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;
using StyleId = std::uint32_t;

/// Closed vocabulary with four reserved ids at the front.
///
/// [PAD] doubles as the deletion outcome of the prediction head and the
/// "stop inserting" outcome of the insertion head.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kReservedCount = 4;

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);

  TokenId add(const std::string& word);
  TokenId id(const std::string& word) const;
  bool contains(const std::string& word) const;
  const std::string& word(TokenId id) const;

  /// Total id count, reserved ids included.
  std::size_t size() const { return words_.size(); }
  /// Number of ordinary (non-reserved) words.
  std::size_t word_count() const { return words_.size() - kReservedCount; }
  static bool is_reserved(TokenId id) { return id < kReservedCount; }

  TokenSeq encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  /// Every word in id order, reserved entries first.
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace rlm
