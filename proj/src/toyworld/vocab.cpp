#include "gst/toyworld/vocab.hpp"

#include <sstream>

#include "gst/errors.hpp"
#include "gst/toyworld/grammar.hpp"

namespace gst::toyworld {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  std::uint64_t h = fnv1a64("");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!ids_.emplace(words_[i], static_cast<Token>(i)).second) {
      throw VocabError("vocab: duplicate word '" + words_[i] + "'");
    }
    h = fnv1a64(words_[i] + "\n", h);
  }
  hash_ = h;
}

const Vocab& Vocab::standard() {
  static const Vocab vocab = [] {
    std::vector<std::string> words = {"[PAD]", "[BOS]", "[EOS]", "[SEP]", "[MASK]"};
    for (auto& w : grammar_words()) words.push_back(w);
    return Vocab(std::move(words));
  }();
  return vocab;
}

Token Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) throw VocabError("vocab: unknown word '" + std::string(word) + "'");
  return it->second;
}

bool Vocab::contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }

const std::string& Vocab::word(Token id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw VocabError("vocab: id " + std::to_string(id) + " out of range");
  }
  return words_[id];
}

Tokens Vocab::encode(std::string_view text) const {
  Tokens out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(std::span<const Token> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += word(tokens[i]);
  }
  return out;
}

}  // namespace gst::toyworld
