// Hashed-word tokenizer. No fitted vocabulary: words map to id buckets by
// hash, so any text tokenizes and the mapping is identical everywhere.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "syndoc/hash.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

// Splits into lowercase word tokens: ASCII alnum runs stay together,
// ASCII punctuation is token-per-character, multibyte code points are
// token-per-code-point. Whitespace only separates.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      if (is_space(static_cast<char>(c))) {
        flush();
      } else if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
        word.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
      } else {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      }
      ++i;
    } else {
      flush();
      std::size_t len = 1;
      if ((c >> 5) == 0x6) len = 2;
      else if ((c >> 4) == 0xe) len = 3;
      else if ((c >> 3) == 0x1e) len = 4;
      len = std::min(len, text.size() - i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  flush();
  return out;
}

class Tokenizer {
 public:
  static constexpr int kClsId = 0;
  static constexpr int kSepId = 1;
  static constexpr int kFirstWordId = 2;

  explicit Tokenizer(int vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size_ <= kFirstWordId) {
      throw std::invalid_argument("Tokenizer: vocab must exceed special ids");
    }
  }

  int vocab_size() const { return vocab_size_; }

  int encode_word(std::string_view word) const {
    const std::uint64_t h = fnv1a64(word);
    return kFirstWordId +
           static_cast<int>(h % static_cast<std::uint64_t>(vocab_size_ - kFirstWordId));
  }

  std::vector<int> encode(std::string_view text) const {
    const std::vector<std::string> words = word_tokens(text);
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(encode_word(w));
    return ids;
  }

 private:
  int vocab_size_;
};

}  // namespace syndoc
