#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gst::toyworld {

using Token = int;
using Tokens = std::vector<Token>;

// Reserved ids of the special tokens.
inline constexpr Token kPad = 0;
inline constexpr Token kBos = 1;
inline constexpr Token kEos = 2;
inline constexpr Token kSep = 3;
inline constexpr Token kMask = 4;
inline constexpr int kNumSpecials = 5;

/// Bijection between the closed grammar's words and dense ids.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> words);

  /// The vocabulary of the built-in grammar (specials first).
  static const Vocab& standard();

  std::size_t size() const { return words_.size(); }
  Token id(std::string_view word) const;  // VocabError if unknown
  bool contains(std::string_view word) const;
  const std::string& word(Token id) const;  // VocabError if out of range
  bool is_special(Token id) const { return id >= 0 && id < kNumSpecials; }

  Tokens encode(std::string_view text) const;  // whitespace separated
  std::string decode(std::span<const Token> tokens) const;

  /// FNV-1a over the ordered word list.
  std::uint64_t hash() const { return hash_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, Token> ids_;
  std::uint64_t hash_ = 0;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace gst::toyworld
