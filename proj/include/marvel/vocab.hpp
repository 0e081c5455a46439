#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "marvel/common.hpp"

namespace marvel {

// Deterministic word vocabulary. Specials occupy the fixed lowest ids;
// the remaining tokens are ordered by (count desc, token asc).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kDecStart = 2;
  static constexpr int kImgStart = 3;
  static constexpr int kImgEnd = 4;
  static constexpr int kNumSpecials = 5;

  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool is_special(int id) const { return id < kNumSpecials; }

  // UNK for out-of-vocabulary words.
  int id_of(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Lowercases and splits on whitespace/punctuation boundaries; ASCII
// alphanumerics and non-ASCII bytes are word characters.
std::vector<std::string> split_words(const std::string& text);

Vocab build_vocab(const std::vector<std::string>& texts, int min_count);

// Token ids, truncated to max_len (128 by default, matching the model's
// text truncation length).
std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len = 128);

// One token per line; line order is id order.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

}  // namespace marvel
